"""Performance bounds and the linear algebra they rely on."""
