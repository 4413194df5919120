"""Scene geometry and baseband signal synthesis."""
