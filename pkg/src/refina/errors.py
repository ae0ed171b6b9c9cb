"""Exception types raised across the package."""


class EdgeListError(ValueError):
    """An edge-list, permutation or alignment file cannot be parsed."""


class DimensionError(ValueError):
    """Shapes of graphs, matrices or mappings do not agree."""


class IngestionError(DimensionError):
    """A file refers to nodes outside the declared dimensions, or misses some."""
