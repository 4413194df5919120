"""Parallel execution of independent trials and grid cells."""
