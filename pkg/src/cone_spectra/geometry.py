"""Catalog of explicit minimal cones and their closed-form curvature.

Every catalog cone is either homogeneous over its link (products of round
spheres, the flat cone) or a Euclidean factor ``R^m x C`` over a homogeneous
cone ``C``.  The latter is reduced to one effective coordinate, the join angle
``t``: a point of the link is ``(sin t * xi, cos t * omega)`` with
``xi`` in ``S^{m-1}`` and ``omega`` in the link of ``C``, so that the link metric
is ``dt^2 + sin^2 t g_{S^{m-1}} + cos^2 t g_{S_C}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate
from scipy.special import beta as beta_fn

__all__ = [
    "ProductOfSpheres",
    "EuclideanFactor",
    "RoundLink",
    "ConeSpec",
    "ConeModel",
    "GeometryError",
    "build_cone",
    "cone_spec_from_dict",
    "second_fundamental_norm",
    "scalar_curvature",
    "sphere_volume",
    "sphere_volume_quadrature",
    "link_volume_quadrature",
    "link_point",
    "FAMILIES",
]


class GeometryError(ValueError):
    """Raised for malformed cone specs or points outside the regular part."""


@dataclass(frozen=True)
class ProductOfSpheres:
    """Cone over ``S^p(a_p) x S^q(a_q)`` in ``S^{p+q+1}``."""

    p: int
    q: int

    family = "product_of_spheres"

    @property
    def n(self) -> int:
        return self.p + self.q + 1

    @property
    def minimizing(self) -> bool:
        return self.p + self.q >= 6

    @property
    def radii(self) -> tuple[float, float]:
        s = self.p + self.q
        return math.sqrt(self.p / s), math.sqrt(self.q / s)

    @property
    def label(self) -> str:
        return f"C({self.p},{self.q})"

    def to_dict(self) -> dict:
        return {"family": self.family, "p": self.p, "q": self.q}


@dataclass(frozen=True)
class EuclideanFactor:
    """Product cone ``R^m x inner``."""

    m: int
    inner: "ConeSpec"

    family = "euclidean_factor"

    @property
    def n(self) -> int:
        return self.m + self.inner.n

    @property
    def minimizing(self) -> bool:
        return self.inner.minimizing

    @property
    def label(self) -> str:
        return f"R^{self.m}x{self.inner.label}"

    def to_dict(self) -> dict:
        return {"family": self.family, "m": self.m, "inner": self.inner.to_dict()}


@dataclass(frozen=True)
class RoundLink:
    """Flat cone ``R^{d+1}`` over the round sphere ``S^d``."""

    d: int

    family = "round_link"

    @property
    def n(self) -> int:
        return self.d + 1

    @property
    def minimizing(self) -> bool:
        return True

    @property
    def label(self) -> str:
        return f"R^{self.d + 1}"

    def to_dict(self) -> dict:
        return {"family": self.family, "d": self.d}


ConeSpec = Union[ProductOfSpheres, EuclideanFactor, RoundLink]

FAMILIES = {
    "product_of_spheres": "cone over S^p(sqrt(p/(p+q))) x S^q(sqrt(q/(p+q))); minimizing iff p+q >= 6",
    "euclidean_factor": "R^m x inner; minimizing iff inner is",
    "round_link": "flat R^{d+1} over S^d; totally geodesic",
}


def _require_int(doc: dict, key: str, path: str, minimum: int) -> int:
    if key not in doc:
        raise GeometryError(f"{path}.{key}: missing field")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise GeometryError(f"{path}.{key}: expected integer, got {value!r}")
    if value < minimum:
        raise GeometryError(f"{path}.{key}: must be >= {minimum}, got {value}")
    return value


def cone_spec_from_dict(doc: dict, path: str = "cone") -> ConeSpec:
    """Parse a config fragment such as ``{"family": "product_of_spheres", "p": 3, "q": 3}``."""
    if not isinstance(doc, dict):
        raise GeometryError(f"{path}: expected an object, got {type(doc).__name__}")
    family = doc.get("family")
    if family == "product_of_spheres":
        return ProductOfSpheres(_require_int(doc, "p", path, 1), _require_int(doc, "q", path, 1))
    if family == "round_link":
        return RoundLink(_require_int(doc, "d", path, 2))
    if family == "euclidean_factor":
        m = _require_int(doc, "m", path, 1)
        if "inner" not in doc:
            raise GeometryError(f"{path}.inner: missing field")
        return EuclideanFactor(m, cone_spec_from_dict(doc["inner"], f"{path}.inner"))
    raise GeometryError(f"{path}.family: unknown family {family!r}")


def sphere_volume(k: int) -> float:
    """Volume of the unit round sphere ``S^k``."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def sphere_volume_quadrature(k: int) -> float:
    """``vol(S^k)`` from the suspension recursion, by numerical quadrature."""
    vol = 2.0  # S^0
    for j in range(1, k + 1):
        value, _ = integrate.quad(lambda t, j=j: math.sin(t) ** (j - 1), 0.0, math.pi, epsabs=0, epsrel=1e-13)
        vol *= value
    return vol


@dataclass(frozen=True)
class ConeModel:
    """Closed-form geometry of a catalog cone, evaluated on its link at ``r = 1``.

    ``a2_link`` is a float for homogeneous links and a callable of the join
    angle otherwise.  ``weight`` is the reduced volume density on ``domain``;
    multiplied by ``weight_factor`` it integrates to ``link_volume``.
    """

    spec: ConeSpec
    link_dim: int
    a2_link: Union[float, Callable[[np.ndarray], np.ndarray]]
    link_singular: tuple[float, ...]
    weight: Callable[[np.ndarray], np.ndarray] | None
    weight_factor: float
    domain: tuple[float, float] | None
    link_volume: float
    factor_m: int = 0
    base: ConeSpec | None = None
    base_a2: float = 0.0

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def minimizing(self) -> bool:
        return self.spec.minimizing

    @property
    def homogeneous(self) -> bool:
        return not callable(self.a2_link)

    @property
    def totally_geodesic(self) -> bool:
        return isinstance(self.spec, RoundLink)

    def a2(self, angle=None):
        """``|A|^2`` on the link at the given join angle (ignored for homogeneous links)."""
        if self.homogeneous:
            if angle is None:
                return float(self.a2_link)
            return np.full(np.shape(angle), float(self.a2_link))
        if angle is None:
            raise GeometryError(f"{self.spec.label}: join angle required")
        angle = np.asarray(angle, dtype=float)
        if np.any(np.isclose(np.abs(angle), math.pi / 2, rtol=0, atol=1e-15)) or np.any(np.abs(angle) > math.pi / 2):
            raise GeometryError(f"{self.spec.label}: angle on the singular set of the link")
        return self.a2_link(angle)


def _flatten(spec: EuclideanFactor) -> tuple[int, ConeSpec]:
    m, inner = spec.m, spec.inner
    depth = 1
    while isinstance(inner, EuclideanFactor):
        depth += 1
        m += inner.m
        inner = inner.inner
    if depth > 2:
        raise GeometryError(f"{spec.label}: Euclidean factor nesting depth {depth} > 2")
    return m, inner


def build_cone(spec: ConeSpec) -> ConeModel:
    """Realize a catalog spec as a :class:`ConeModel`."""
    if isinstance(spec, ProductOfSpheres):
        if spec.p < 1 or spec.q < 1:
            raise GeometryError(f"{spec.label}: p and q must be >= 1")
        ap, aq = spec.radii
        vol = sphere_volume(spec.p) * ap**spec.p * sphere_volume(spec.q) * aq**spec.q
        # principal curvatures +-sqrt(q/p) (p times) and -+sqrt(p/q) (q times)
        a2 = spec.p * (spec.q / spec.p) + spec.q * (spec.p / spec.q)
        return ConeModel(spec, spec.p + spec.q, float(a2), (), None, vol, None, vol)
    if isinstance(spec, RoundLink):
        if spec.d < 2:
            raise GeometryError(f"{spec.label}: d must be >= 2")
        d = spec.d
        return ConeModel(
            spec,
            d,
            0.0,
            (),
            lambda t: np.sin(t) ** (d - 1),
            sphere_volume(d - 1),
            (0.0, math.pi),
            sphere_volume(d),
        )
    if isinstance(spec, EuclideanFactor):
        m, base = _flatten(spec)
        if isinstance(base, RoundLink):
            raise GeometryError(f"{spec.label}: Euclidean factor over a flat cone has empty singular set")
        inner = build_cone(base)
        k_l = inner.link_dim
        a2_inner = float(inner.a2_link)
        if m == 1:
            domain = (-math.pi / 2, math.pi / 2)
            singular = (-math.pi / 2, math.pi / 2)
            factor = inner.link_volume
            integral = float(beta_fn(0.5, (k_l + 1) / 2))
        else:
            domain = (0.0, math.pi / 2)
            singular = (math.pi / 2,)
            factor = inner.link_volume * sphere_volume(m - 1)
            integral = 0.5 * float(beta_fn(m / 2, (k_l + 1) / 2))

        def weight(t, m=m, k_l=k_l):
            t = np.asarray(t, dtype=float)
            return np.sin(np.abs(t)) ** (m - 1) * np.cos(t) ** k_l

        def a2_link(t, a2_inner=a2_inner):
            return a2_inner / np.cos(np.asarray(t, dtype=float)) ** 2

        return ConeModel(
            spec,
            spec.n - 1,
            a2_link,
            singular,
            weight,
            factor,
            domain,
            factor * integral,
            factor_m=m,
            base=base,
            base_a2=a2_inner,
        )
    raise GeometryError(f"unsupported cone spec {spec!r}")


def link_volume_quadrature(model: ConeModel) -> float:
    """Link volume by numerical quadrature, independent of the closed forms in :func:`build_cone`."""
    spec = model.spec
    if isinstance(spec, ProductOfSpheres):
        ap, aq = spec.radii
        return sphere_volume_quadrature(spec.p) * ap**spec.p * sphere_volume_quadrature(spec.q) * aq**spec.q
    lo, hi = model.domain
    value, _ = integrate.quad(lambda t: float(model.weight(t)), lo, hi, epsabs=0, epsrel=1e-13, limit=200)
    if isinstance(spec, RoundLink):
        return sphere_volume_quadrature(spec.d - 1) * value
    inner = build_cone(model.base)
    factor = link_volume_quadrature(inner)
    if model.factor_m >= 2:
        factor *= sphere_volume_quadrature(model.factor_m - 1)
    return factor * value


def _check_point(model: ConeModel, r, angle):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise GeometryError("radius must be positive")
    return r, model.a2(angle)


def second_fundamental_norm(model: ConeModel, r, angle=None):
    """``|A|`` at ``(r, angle)``; homogeneous of degree -1 in ``r``."""
    r, a2 = _check_point(model, r, angle)
    return np.sqrt(a2) / r


def scalar_curvature(model: ConeModel, r, angle=None):
    """Intrinsic scalar curvature ``-|A|^2`` (Gauss equation, flat ambient, minimal)."""
    r, a2 = _check_point(model, r, angle)
    return -a2 / r**2


def link_point(model: ConeModel, angle: float = 0.0) -> np.ndarray:
    """A unit vector of ``R^{n+1}`` lying on the regular part of the link."""
    spec = model.spec
    if isinstance(spec, ProductOfSpheres):
        ap, aq = spec.radii
        x = np.zeros(spec.p + spec.q + 2)
        x[0] = ap
        x[spec.p + 1] = aq
        return x
    if isinstance(spec, RoundLink):
        x = np.zeros(spec.d + 2)
        x[0] = 1.0
        return x
    base_point = link_point(build_cone(model.base))
    xi = np.zeros(model.factor_m)
    xi[0] = 1.0
    return np.concatenate([math.sin(angle) * xi, math.cos(angle) * base_point])
