"""Service integration modules: case loading, the MILP back end, reports."""
