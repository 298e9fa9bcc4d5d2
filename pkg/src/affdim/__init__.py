"""Desk-scale numerics for the dimension of planar self-affine measures."""

__version__ = "0.1.0"

from .affine import AffineMap2  # noqa: E402
from .fixtures import get_fixture  # noqa: E402
from .ifs import IfsSystem, validate  # noqa: E402

__all__ = ["AffineMap2", "IfsSystem", "get_fixture", "validate", "__version__"]
