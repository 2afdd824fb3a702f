"""One-dimensional reduced discretizations.

Links with a single effective coordinate become weighted Sturm-Liouville
problems ``-(W u')' + W V u = mu * D u`` that are discretized vertex-centred:
node ``j`` owns the dual cell between the neighbouring midpoints, the
stiffness couples neighbours through ``W`` at the midpoints, and the mass and
potential terms are dual-cell integrals (Gauss-Legendre).  The resulting
pencil is symmetric tridiagonal / diagonal by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .geometry import ConeModel, EuclideanFactor, RoundLink

__all__ = [
    "MeshError",
    "RadialGrid",
    "SturmLiouvilleProblem",
    "HomogeneousLink",
    "ExhaustionSchedule",
    "DiscreteForms",
    "SuspensionTemplate",
    "suspension_problem",
    "assemble",
    "exhaustion",
    "graded_nodes",
    "DEFAULT_N",
    "GRADING_OFFSET",
]

DEFAULT_N = 4000
GRADING_OFFSET = 0.02
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid in ``s = ln r``."""

    s_min: float
    s_max: float
    N: int

    def __post_init__(self):
        if not self.s_min < self.s_max:
            raise MeshError("need s_min < s_max")
        if self.N < 16:
            raise MeshError("RadialGrid needs N >= 16")

    @classmethod
    def annulus(cls, r_lo: float, r_hi: float, N: int) -> "RadialGrid":
        if r_lo <= 0:
            raise MeshError("annulus must stay away from r = 0")
        return cls(math.log(r_lo), math.log(r_hi), N)

    @classmethod
    def window(cls, S: float, N: int, center: float = 0.0) -> "RadialGrid":
        return cls(center - S, center + S, N)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.N)

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.s)

    @property
    def h(self) -> float:
        return (self.s_max - self.s_min) / (self.N - 1)


@dataclass(frozen=True)
class HomogeneousLink:
    """Zero-dimensional reduction: the link operator has a constant potential."""

    model: ConeModel
    potential: float
    zero_dimensional: bool = True


@dataclass(frozen=True)
class SturmLiouvilleProblem:
    domain: tuple[float, float]
    weight: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], np.ndarray]
    boundary: tuple[str, str]
    N: int = DEFAULT_N
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    nodes: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    eps: float = 0.0

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise MeshError(f"empty domain ({lo}, {hi})")
        for b in self.boundary:
            if b not in ("dirichlet", "natural"):
                raise MeshError(f"unknown boundary condition {b!r}")
        if self.N < 3:
            raise MeshError("need at least 3 nodes")

    def grid(self) -> np.ndarray:
        if self.nodes is not None:
            return np.asarray(self.nodes, dtype=float)
        return np.linspace(self.domain[0], self.domain[1], self.N)

    def contains(self, other: "SturmLiouvilleProblem") -> bool:
        return self.domain[0] <= other.domain[0] and other.domain[1] <= self.domain[1]


def graded_nodes(lo: float, hi: float, N: int, singular: str, eps: float, offset: float = GRADING_OFFSET) -> np.ndarray:
    """Nodes on ``[lo, hi]`` truncated by ``eps`` at its singular end(s), clustered toward them.

    The distance ``u`` to a singular end runs over ``(eps+c)*q**x - c`` for
    uniform ``x``, so cells near the truncation point have size ``~ eps``.
    ``singular`` is ``"hi"`` (nodes on ``[lo, hi - eps]``) or ``"both"``
    (nodes on ``[lo + eps, hi - eps]``, an exact mirror image with a node at
    the centre; ``N`` is rounded up to odd).
    """
    c = offset
    if singular == "hi":
        span = hi - lo
        x = np.linspace(0.0, 1.0, N)
        u = (eps + c) * ((span + c) / (eps + c)) ** x - c
        u[0], u[-1] = eps, span
        return (hi - u)[::-1].copy()
    if singular == "both":
        half = N // 2 + 1
        center = 0.5 * (lo + hi)
        span = 0.5 * (hi - lo)
        x = np.linspace(0.0, 1.0, half)
        u = (eps + c) * ((span + c) / (eps + c)) ** x - c
        u[0], u[-1] = eps, span
        right = (hi - u)[::-1]
        right[0] = center
        left = 2 * center - right[:0:-1]
        return np.concatenate([left, right])
    raise MeshError(f"unknown grading {singular!r}")


def suspension_problem(model: ConeModel, xop_potential, eps: float, N: int = DEFAULT_N):
    """Reduced link problem of ``model``; Dirichlet at distance ``eps`` from the singular set.

    Homogeneous links have no effective coordinate and return
    :class:`HomogeneousLink`.  A round link is reduced to its suspension angle
    and carries no singular set (``eps`` is ignored).
    """
    if eps < 0:
        raise MeshError("eps must be >= 0")
    spec = model.spec
    if isinstance(spec, RoundLink):
        return SturmLiouvilleProblem((0.0, math.pi), model.weight, _as_function(xop_potential), ("natural", "natural"), N)
    if model.homogeneous:
        value = xop_potential() if callable(xop_potential) else xop_potential
        return HomogeneousLink(model, float(value))
    if not isinstance(spec, EuclideanFactor):
        raise MeshError(f"no one-dimensional reduction for {spec.label}")
    pot = _as_function(xop_potential)
    span = math.pi if model.factor_m == 1 else math.pi / 2
    if eps >= span / 4:
        raise MeshError(f"eps={eps} leaves an empty (degenerate) domain: truncation must stay below {span / 4:.6g}")
    if model.factor_m == 1:
        lo, hi = -math.pi / 2 + eps, math.pi / 2 - eps
        if not lo < hi:
            raise MeshError(f"eps={eps} leaves an empty domain")
        nodes = graded_nodes(-math.pi / 2, math.pi / 2, N, "both", eps)
        return SturmLiouvilleProblem((lo, hi), model.weight, pot, ("dirichlet", "dirichlet"), len(nodes), nodes=nodes, eps=eps)
    lo, hi = 0.0, math.pi / 2 - eps
    if not lo < hi:
        raise MeshError(f"eps={eps} leaves an empty domain")
    nodes = graded_nodes(0.0, math.pi / 2, N, "hi", eps)
    return SturmLiouvilleProblem((lo, hi), model.weight, pot, ("natural", "dirichlet"), N, nodes=nodes, eps=eps)


def _as_function(potential):
    if callable(potential):
        return potential
    value = float(potential)
    return lambda t: np.full(np.shape(t), value)


def _cell_integral(a: np.ndarray, b: np.ndarray, f) -> np.ndarray:
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = center[:, None] + half[:, None] * _GL_X[None, :]
    return (np.asarray(f(pts)) * _GL_W[None, :]).sum(axis=1) * half


@dataclass(frozen=True)
class DiscreteForms:
    """Symmetric tridiagonal stiffness ``(diag, off)`` and diagonal ``mass`` on the free nodes."""

    diag: np.ndarray
    off: np.ndarray
    mass: np.ndarray
    nodes: np.ndarray
    all_nodes: np.ndarray
    free: np.ndarray
    # per-cell flux W/h and per-node potential mass on all nodes; energies from
    # this split avoid the cancellation of u^T K u for nearly constant u
    flux: Optional[np.ndarray] = None
    pot: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.diag)

    def stiffness_matrix(self) -> sparse.csr_matrix:
        return sparse.diags([self.off, self.diag, self.off], [-1, 0, 1], format="csr")

    def mass_matrix(self) -> sparse.csr_matrix:
        return sparse.diags(self.mass, 0, format="csr")

    def energy(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        if self.flux is None:
            return float(u @ (self.diag * u) + 2.0 * np.sum(self.off * u[:-1] * u[1:]))
        full = np.zeros(len(self.all_nodes))
        full[self.free] = u
        return float(np.sum(self.flux * np.diff(full) ** 2) + np.sum(self.pot * full * full))

    def norm2(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        return float(np.sum(self.mass * u * u))

    def rayleigh(self, u: np.ndarray) -> float:
        return self.energy(u) / self.norm2(u)

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def scaled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``M^{-1/2} K M^{-1/2}`` as ``(d, e)`` plus the scaling vector."""
        s = 1.0 / np.sqrt(self.mass)
        return self.diag * s * s, self.off * s[:-1] * s[1:], s


def assemble(problem: SturmLiouvilleProblem) -> DiscreteForms:
    t = problem.grid()
    if np.any(np.diff(t) <= 0):
        raise MeshError("nodes must be strictly increasing")
    h = np.diff(t)
    mid = 0.5 * (t[1:] + t[:-1])
    W = problem.weight
    density = problem.density or W
    flux = np.asarray(W(mid), dtype=float) / h

    def wv(x):
        return np.asarray(W(x)) * np.asarray(problem.potential(x))

    n = len(t)
    mass = np.zeros(n)
    mass[:-1] += _cell_integral(t[:-1], mid, density)
    mass[1:] += _cell_integral(mid, t[1:], density)
    pot = np.zeros(n)
    pot[:-1] += _cell_integral(t[:-1], mid, wv)
    pot[1:] += _cell_integral(mid, t[1:], wv)
    if not np.all(np.isfinite(pot)):
        raise MeshError("non-finite potential inside the domain")

    diag = pot.copy()
    diag[:-1] += flux
    diag[1:] += flux
    off = -flux.copy()

    free = np.ones(n, dtype=bool)
    if problem.boundary[0] == "dirichlet":
        free[0] = False
    if problem.boundary[1] == "dirichlet":
        free[-1] = False
    idx = np.flatnonzero(free)
    lo, hi = idx[0], idx[-1]
    return DiscreteForms(
        diag=diag[lo : hi + 1].copy(),
        off=off[lo:hi].copy(),
        mass=mass[lo : hi + 1].copy(),
        nodes=t[lo : hi + 1].copy(),
        all_nodes=t,
        free=free,
        flux=flux,
        pot=pot,
    )


@dataclass(frozen=True)
class ExhaustionSchedule:
    eps_list: tuple[float, ...]

    def __post_init__(self):
        eps = np.asarray(self.eps_list, dtype=float)
        if eps.size == 0:
            raise MeshError("schedule is empty")
        if np.any(eps <= 0):
            raise MeshError("truncation offsets must be positive")
        if np.any(np.diff(eps) >= 0):
            raise MeshError("truncation offsets must be strictly decreasing")

    @classmethod
    def geometric(cls, eps0: float = 1e-2, terms: int = 6, ratio: float = 2.0) -> "ExhaustionSchedule":
        return cls(tuple(float(eps0 * ratio ** (-i)) for i in range(terms)))

    def validate_for(self, span: float) -> None:
        if max(self.eps_list) >= span / 4:
            raise MeshError(f"truncation offset {max(self.eps_list)} is not below a quarter of the domain ({span / 4})")


@dataclass(frozen=True)
class SuspensionTemplate:
    """A link problem parametrized by the truncation offset."""

    model: ConeModel
    potential: Callable
    N: int = DEFAULT_N

    @property
    def span(self) -> float:
        return math.pi if self.model.factor_m == 1 else math.pi / 2

    def at(self, eps: float) -> SturmLiouvilleProblem:
        return suspension_problem(self.model, self.potential, eps, self.N)


def exhaustion(template: SuspensionTemplate, schedule: ExhaustionSchedule) -> list[SturmLiouvilleProblem]:
    schedule.validate_for(template.span)
    problems = [template.at(eps) for eps in schedule.eps_list]
    for inner, outer in zip(problems, problems[1:]):
        if not outer.contains(inner):
            raise MeshError("exhaustion domains are not nested")
    return problems


def with_nodes(problem: SturmLiouvilleProblem, nodes: np.ndarray) -> SturmLiouvilleProblem:
    return replace(problem, nodes=np.asarray(nodes, dtype=float), N=len(nodes))
