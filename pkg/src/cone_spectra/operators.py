"""Natural Schrodinger operators on catalog cones and their cross-sections.

Catalog cones sit in flat space, so ``Ric_M = 0``, ``scal_M = 0`` and, by
the Gauss equation for minimal hypersurfaces, ``scal_C = -|A|^2``.  Every
operator here is ``L = -Delta + V`` with ``V(t x) = t^{-2} V(x)``; on the link
it becomes ``V^x = r^2 V`` at ``r = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .geometry import ConeModel, EuclideanFactor, RoundLink
from .mesh import DiscreteForms, RadialGrid, SturmLiouvilleProblem, assemble
from .skin import SkinField

__all__ = [
    "Laplacian",
    "Jacobi",
    "Conformal",
    "SConformal",
    "ABLaplacian",
    "DimShiftedConformal",
    "OperatorKind",
    "OperatorError",
    "ShiftedOperator",
    "CrossSectionOperator",
    "conformal_coefficient",
    "potential_on_link",
    "cross_section",
    "quadratic_form",
    "radial_forms",
    "log_bump",
    "kind_from_dict",
]


class OperatorError(ValueError):
    pass


def conformal_coefficient(n: int) -> float:
    """``(n-2) / (4(n-1))``."""
    return (n - 2) / (4.0 * (n - 1))


@dataclass(frozen=True)
class Laplacian:
    name = "laplacian"


@dataclass(frozen=True)
class Jacobi:
    """``-Delta - |A|^2 - Ric_M(nu, nu)``; the stability operator."""

    name = "jacobi"


@dataclass(frozen=True)
class Conformal:
    """``-Delta + (n-2)/(4(n-1)) scal``."""

    name = "conformal"


@dataclass(frozen=True)
class SConformal:
    """``-Delta + (n-2)/(4(n-1)) (scal - S)`` with ``S = c / r**degree``."""

    c: float
    degree: int = 2
    name = "s_conformal"


@dataclass(frozen=True)
class ABLaplacian:
    """``-Delta + |A + B|^2``; ``B`` must vanish on Euclidean hypersurfaces.

    ``b_norm2`` is the homogeneous symbol of ``|A + B|^2 - |A|^2``, kept for
    non-flat extensions.
    """

    b_norm2: float = 0.0
    name = "ab_laplacian"


@dataclass(frozen=True)
class DimShiftedConformal:
    """Conformal Laplacian with the coefficient of dimension ``n_shift``."""

    n_shift: int
    name = "dim_shifted"


OperatorKind = Union[Laplacian, Jacobi, Conformal, SConformal, ABLaplacian, DimShiftedConformal]

_SIMPLE = {"laplacian": Laplacian, "jacobi": Jacobi, "conformal": Conformal}


def kind_from_dict(doc, path: str = "operator") -> OperatorKind:
    if not isinstance(doc, dict):
        raise OperatorError(f"{path}: expected an object")
    kind = doc.get("kind")
    if kind in _SIMPLE:
        return _SIMPLE[kind]()
    if kind == "s_conformal":
        c = doc.get("c")
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise OperatorError(f"{path}.c: expected a number")
        degree = doc.get("degree", 2)
        if isinstance(degree, bool) or not isinstance(degree, int):
            raise OperatorError(f"{path}.degree: expected an integer")
        return SConformal(float(c), degree)
    if kind == "ab_laplacian":
        b = doc.get("b_norm2", 0.0)
        if isinstance(b, bool) or not isinstance(b, (int, float)):
            raise OperatorError(f"{path}.b_norm2: expected a number")
        return ABLaplacian(float(b))
    if kind == "dim_shifted":
        n_shift = doc.get("n_shift")
        if isinstance(n_shift, bool) or not isinstance(n_shift, int):
            raise OperatorError(f"{path}.n_shift: expected an integer")
        return DimShiftedConformal(n_shift)
    raise OperatorError(f"{path}.kind: unknown operator kind {kind!r}")


def kind_to_dict(kind: OperatorKind) -> dict:
    doc = {"kind": kind.name}
    if isinstance(kind, SConformal):
        doc.update(c=kind.c, degree=kind.degree)
    elif isinstance(kind, ABLaplacian):
        doc["b_norm2"] = kind.b_norm2
    elif isinstance(kind, DimShiftedConformal):
        doc["n_shift"] = kind.n_shift
    return doc


def _a2_coefficient(kind: OperatorKind, n: int) -> tuple[float, float]:
    """``V^x = alpha * a2_link + beta`` for the given kind on an ``n``-cone."""
    if isinstance(kind, Laplacian):
        return 0.0, 0.0
    if isinstance(kind, Jacobi):
        return -1.0, 0.0
    if isinstance(kind, Conformal):
        return -conformal_coefficient(n), 0.0
    if isinstance(kind, DimShiftedConformal):
        if kind.n_shift < n:
            raise OperatorError(f"dimensionally shifted operator needs n_shift >= {n}, got {kind.n_shift}")
        return -conformal_coefficient(kind.n_shift), 0.0
    if isinstance(kind, ABLaplacian):
        if kind.b_norm2 != 0.0:
            raise OperatorError("B must vanish on Euclidean hypersurfaces")
        return 1.0, 0.0
    if isinstance(kind, SConformal):
        if kind.degree != 2:
            raise OperatorError(f"S = c/r^{kind.degree} is not homogeneous of degree -2; the operator would not be natural on cones")
        return -conformal_coefficient(n), -conformal_coefficient(n) * kind.c
    raise OperatorError(f"unsupported operator kind {kind!r}")


def potential_on_link(kind: OperatorKind, model: ConeModel):
    """``V^x`` as a number (homogeneous link) or a function of the join angle."""
    alpha, beta = _a2_coefficient(kind, model.n)
    if model.homogeneous:
        return alpha * float(model.a2_link) + beta

    def potential(t):
        return alpha * model.a2(t) + beta

    return potential


def potential_at(kind: OperatorKind, model: ConeModel, r, angle=None):
    """Pointwise ``V`` at radius ``r`` (direct evaluation, for homogeneity audits)."""
    r = np.asarray(r, dtype=float)
    alpha, beta = _a2_coefficient(kind, model.n)
    a2 = model.a2(angle) if not model.homogeneous else float(model.a2_link)
    abs_a2 = a2 / r**2
    if isinstance(kind, SConformal):
        return alpha * abs_a2 - conformal_coefficient(model.n) * kind.c / r**2
    return alpha * abs_a2 + beta / r**2


@dataclass(frozen=True)
class ShiftedOperator:
    """``L_lambda = L - lambda * s^2``."""

    kind: OperatorKind
    lam: float
    skin: SkinField


@dataclass(frozen=True)
class CrossSectionOperator:
    """``L^x_lambda = -Delta_{S_C} + V^x - lambda (s^x)^2`` on the link."""

    model: ConeModel
    kind: OperatorKind
    lam: float
    potential: Union[float, Callable[[np.ndarray], np.ndarray]]
    homogeneous: bool
    skin: SkinField

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def weight(self):
        return self.model.weight

    @property
    def domain(self):
        return self.model.domain

    def endpoint_coefficient(self) -> float:
        """``lim (pi/2 - t)^2 V(t)`` at the singular end of a factor link."""
        if self.homogeneous or not isinstance(self.model.spec, EuclideanFactor):
            return 0.0
        alpha, beta = _a2_coefficient(self.kind, self.model.n)
        return alpha * self.model.base_a2 - self.lam * self.skin.s_hat**2


def cross_section(op: ShiftedOperator, model: ConeModel) -> CrossSectionOperator:
    if op.skin.model.spec != model.spec:
        raise OperatorError(f"skin built for {op.skin.model.spec.label}, operator applied on {model.spec.label}")
    base = potential_on_link(op.kind, model)
    lam = float(op.lam)
    skin = op.skin
    if model.homogeneous:
        value = base if lam == 0 else base - lam * skin.s_hat**2
        return CrossSectionOperator(model, op.kind, lam, float(value), True, skin)
    if lam == 0:
        return CrossSectionOperator(model, op.kind, lam, base, False, skin)

    def potential(t):
        return base(t) - lam * skin.on_link(t) ** 2

    return CrossSectionOperator(model, op.kind, lam, potential, False, skin)


def log_bump(s: np.ndarray, center: float, half_width: float) -> np.ndarray:
    """Smooth bump ``exp(-1/(1-x^2))`` in ``x = (s - center)/half_width``, zero outside."""
    x = (np.asarray(s, dtype=float) - center) / half_width
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def radial_forms(model: ConeModel, grid: RadialGrid, potential: float, density: float = 1.0, boundary=("dirichlet", "dirichlet")) -> DiscreteForms:
    """Log-radial forms for radial functions on a homogeneous cone.

    In ``s = ln r`` with ``dV = e^{ns} ds dvol_link`` a radial ``f`` has
    ``int |grad f|^2 + V f^2 = vol * int e^{(n-2)s} (f_s^2 + V^x f^2) ds``.
    ``density`` multiplies the mass (``s_hat^2`` for the skin-weighted form).
    The weight is shifted to the window centre, which leaves quotients unchanged.
    The forms omit the link volume factor.
    """
    if not model.homogeneous:
        raise OperatorError(f"{model.spec.label}: radial reduction needs a homogeneous link")
    beta = model.n - 2
    center = 0.5 * (grid.s_min + grid.s_max)

    def weight(s):
        return np.exp(beta * (np.asarray(s) - center))

    def dens(s):
        return density * weight(s)

    pot = float(potential)
    problem = SturmLiouvilleProblem(
        (grid.s_min, grid.s_max), weight, lambda s: np.full(np.shape(s), pot), tuple(boundary), grid.N, density=dens, nodes=grid.s
    )
    return assemble(problem)


@dataclass(frozen=True)
class FormValue:
    form: float
    skin_weighted: float
    gradient: float
    scale: float

    @property
    def quotient(self) -> float:
        return self.form / self.skin_weighted if self.skin_weighted else math.nan


def quadratic_form(op: ShiftedOperator, model: ConeModel, f, grid: RadialGrid, atol: float = 1e-14) -> FormValue:
    """``int |grad f|^2 + V_lambda f^2`` and ``int s^2 f^2`` for a radial test function.

    ``f`` is sampled on ``grid`` (or given as a callable of ``s``) and must
    vanish at both window ends.  Values include the link volume and the
    weight ``e^{(n-2)s}`` in absolute normalization.
    """
    values = np.asarray(f(grid.s) if callable(f) else f, dtype=float)
    if values.shape != (grid.N,):
        raise OperatorError("test function must be sampled on the grid nodes")
    if abs(values[0]) > atol or abs(values[-1]) > atol:
        raise OperatorError("test function must vanish at both ends of the window")
    if isinstance(model.spec, RoundLink):
        s_hat = 0.0
    else:
        if op.skin.model.spec != model.spec:
            raise OperatorError("skin/model mismatch")
        s_hat = op.skin.s_hat
    v_link = potential_on_link(op.kind, model)
    interior = values[1:-1]
    grad = radial_forms(model, grid, 0.0).energy(interior)
    pot = radial_forms(model, grid, 1.0).norm2(interior)  # int e^{(n-2)s} f^2 ds
    scale = model.link_volume * math.exp((model.n - 2) * 0.5 * (grid.s_min + grid.s_max))
    form = grad + (float(v_link) - op.lam * s_hat**2) * pot
    return FormValue(scale * form, scale * s_hat**2 * pot, scale * grad, scale)
