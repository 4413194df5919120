"""Grid imaging: dictionaries, sparse solvers and synchronisation."""
