"""Import every algorithm module so the registry is complete."""

from . import cblof, ensemble, histogram, iforest, mcd, ocsvm, proximity  # noqa: F401
