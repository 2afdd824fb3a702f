"""Spectral geometry on explicit area-minimizing cones.

Skin transforms, Hardy constants, cross-sectional ground states of natural
Schrodinger operators and the radial exponents ``alpha_+-`` on the catalog of
Simons-type cones, Euclidean factors over them and flat cones.
"""

__version__ = "0.1.0"

from .geometry import EuclideanFactor, ProductOfSpheres, RoundLink, build_cone  # noqa: E402

__all__ = ["EuclideanFactor", "ProductOfSpheres", "RoundLink", "build_cone", "__version__"]
