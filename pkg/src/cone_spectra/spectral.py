"""Principal eigenvalue problems on links and log-radial windows."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal
from scipy.linalg.lapack import dpttrf, dpttrs

from .geometry import EuclideanFactor, RoundLink
from .mesh import (
    DEFAULT_N,
    DiscreteForms,
    ExhaustionSchedule,
    RadialGrid,
    SuspensionTemplate,
    assemble,
    exhaustion,
    suspension_problem,
)
from .operators import ABLaplacian, CrossSectionOperator, OperatorError, ShiftedOperator, potential_on_link, radial_forms

__all__ = [
    "SpectralError",
    "SpectralResult",
    "WeightedEigenEstimate",
    "EigenPair",
    "inverse_power_iteration",
    "lowest_eigenvalues",
    "principal_eigen_link",
    "dirichlet_exhaustion",
    "weighted_principal_eigenvalue",
    "window_eigenvalue",
    "neumann_eigenvalue",
    "richardson",
]

log = logging.getLogger(__name__)

TOL = 1e-12
MAX_ITER = 10_000


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray
    iterations: int
    residual: float


def lowest_eigenvalues(forms: DiscreteForms, k: int = 1, vectors: bool = False):
    """Lowest ``k`` generalized eigenvalues by a tridiagonal eigensolver (validation path)."""
    d, e, s = forms.scaled()
    if vectors:
        w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
        return w, v * s[:, None]
    return eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1), eigvals_only=True)


def inverse_power_iteration(forms: DiscreteForms, tol: float = TOL, max_iter: int = MAX_ITER, shift: Optional[float] = None) -> EigenPair:
    """Ground pair of ``K u = mu M u`` by shifted inverse iteration.

    Works on the symmetric scaling ``A = M^{-1/2} K M^{-1/2}``.  Each step
    factorizes ``A - sigma I`` (LDL^T, tridiagonal).  The shift trails the
    current Rayleigh quotient by ``min(1, 2 |r|)`` with ``r`` the residual
    (some eigenvalue lies within ``|r|`` of the quotient), and is backed off
    until the factorization certifies positive definiteness, so ``sigma``
    stays strictly below the spectrum and the iterate cannot jump to an
    excited state.
    """
    d, e, s = forms.scaled()
    n = len(d)
    if shift is None:
        cell_potential = forms.apply(np.ones(n)) / forms.mass
        shift = float(np.min(cell_potential)) - 1.0
    x = np.sqrt(forms.mass)  # u = 1 in unscaled variables
    x /= np.linalg.norm(x)
    # rounding floor of a Rayleigh quotient: machine precision times the matrix scale
    noise = 64.0 * np.finfo(float).eps * float(np.max(np.abs(d)) + 2.0 * (np.max(np.abs(e)) if len(e) else 0.0))
    rq_old = math.inf
    sigma = shift
    residual = math.inf
    for it in range(1, max_iter + 1):
        k = 0
        while True:
            df, ef, info = dpttrf(d - sigma, e)
            if info == 0:
                break
            k += 1
            sigma -= 2.0 ** (k - 1) * max(1e-8, abs(rq_old - sigma) if math.isfinite(rq_old) else 1.0)
            if k > 80:
                raise SpectralError("could not find a positive definite shift")
        y, info = dpttrs(df, ef, x)
        if info != 0:
            raise SpectralError(f"tridiagonal solve failed (info={info})")
        y /= np.linalg.norm(y)
        if y.sum() < 0:
            y = -y
        ay = d * y
        ay[:-1] += e * y[1:]
        ay[1:] += e * y[:-1]
        rq = float(y @ ay)
        residual = float(np.linalg.norm(ay - rq * y))
        x = y
        if abs(rq - rq_old) <= max(tol * max(1.0, abs(rq)), noise):
            u = x * s
            # the split energy is free of the O(eps ||A||) cancellation in rq
            return EigenPair(forms.rayleigh(u) if forms.flux is not None else rq, u, it, residual)
        rq_old = rq
        gap = min(1.0, 2.0 * residual)
        sigma = rq - max(gap, 1e-9 * max(1.0, abs(rq)), 1e3 * noise)
    raise SpectralError(f"inverse iteration did not converge in {max_iter} steps (residual {residual:.3e})")


@dataclass
class SpectralResult:
    mu: float
    nodes: Optional[np.ndarray]
    psi: Optional[np.ndarray]
    n: int
    homogeneous: bool
    mu_sequence: list = field(default_factory=list)
    mu_extrapolated: Optional[float] = None
    order: Optional[float] = None
    analytic_order: Optional[float] = None
    eps_list: list = field(default_factory=list)
    iterations: int = 0
    residual: float = 0.0
    monotone_violation: float = 0.0
    psi_ref: Optional[np.ndarray] = None
    psi_extrapolated: Optional[np.ndarray] = None
    psi_extrapolated_nodes: Optional[np.ndarray] = None
    reference_angle: Optional[float] = None
    members: list = field(default_factory=list, repr=False)
    forms: Optional[DiscreteForms] = field(default=None, repr=False)
    psi_constant: Optional[float] = None
    link_volume: float = 1.0

    @property
    def mu_limit(self) -> float:
        return self.mu_extrapolated if self.mu_extrapolated is not None else self.mu

    def psi_positive(self) -> bool:
        if self.homogeneous:
            return self.psi_constant > 0
        return bool(np.all(self.psi > 0))

    def to_dict(self) -> dict:
        doc = {
            "mu": self.mu,
            "mu_limit": self.mu_limit,
            "homogeneous": self.homogeneous,
            "psi_positive": self.psi_positive(),
            "psi_normalization": "weighted L2 = 1 on the link; psi_ref = 1 at the reference angle",
            "iterations": self.iterations,
            "residual": self.residual,
        }
        if self.homogeneous:
            doc["psi_constant"] = self.psi_constant
        if self.mu_sequence:
            doc.update(
                mu_sequence=list(self.mu_sequence),
                eps_list=list(self.eps_list),
                mu_extrapolated=self.mu_extrapolated,
                measured_order=self.order,
                analytic_order=self.analytic_order,
                monotone_violation=self.monotone_violation,
                reference_angle=self.reference_angle,
            )
        return doc


def _homogeneous_result(xop: CrossSectionOperator) -> SpectralResult:
    mu = float(xop.potential)
    vol = xop.model.link_volume
    return SpectralResult(mu=mu, nodes=None, psi=None, n=xop.n, homogeneous=True, psi_constant=1.0 / math.sqrt(vol), link_volume=vol)


def _solve_problem(problem, weight_factor: float):
    forms = assemble(problem)
    pair = inverse_power_iteration(forms)
    psi = pair.vector / math.sqrt(forms.norm2(pair.vector) * weight_factor)
    return forms, pair, psi


def principal_eigen_link(xop: CrossSectionOperator, N: int = DEFAULT_N, schedule: Optional[ExhaustionSchedule] = None) -> SpectralResult:
    """Ground state of the link operator.

    Homogeneous links: ``mu`` is the constant potential and ``psi`` is
    constant.  Round links: one regular Sturm-Liouville solve.  Links with a
    singular set go through a Dirichlet exhaustion.
    """
    if xop.homogeneous and not isinstance(xop.model.spec, RoundLink):
        return _homogeneous_result(xop)
    if isinstance(xop.model.spec, RoundLink):
        problem = suspension_problem(xop.model, xop.potential, 0.0, N)
        forms, pair, psi = _solve_problem(problem, xop.model.weight_factor)
        return SpectralResult(
            mu=pair.value, nodes=forms.nodes, psi=psi, n=xop.n, homogeneous=False,
            iterations=pair.iterations, residual=pair.residual, forms=forms, link_volume=xop.model.link_volume,
        )
    return dirichlet_exhaustion(xop, schedule or ExhaustionSchedule.geometric(), N)


def richardson(values: Sequence[float], ratio: float) -> tuple[float, float]:
    """Limit and measured order from the last three members of a sequence with step ratio ``ratio``."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise SpectralError("Richardson extrapolation needs at least three members")
    d1, d2 = v[-3] - v[-2], v[-2] - v[-1]
    if d1 == 0 or d2 == 0 or d1 / d2 <= 1:
        return float(v[-1]), math.nan
    order = math.log(d1 / d2) / math.log(ratio)
    return float(v[-1] - d2 / (ratio**order - 1.0)), order


def _analytic_order(xop: CrossSectionOperator) -> Optional[float]:
    """Gap of the indicial roots ``beta^2 + (k-1) beta - v0 = 0`` at the singular end."""
    if not isinstance(xop.model.spec, EuclideanFactor):
        return None
    k = xop.model.link_dim - xop.model.factor_m  # link dimension of the factor cone
    v0 = xop.endpoint_coefficient()
    disc = ((k - 1) / 2.0) ** 2 + v0
    return 2.0 * math.sqrt(disc) if disc > 0 else None


def _reference_angle(xop: CrossSectionOperator, eps0: float) -> float:
    lo, hi = xop.model.domain
    if xop.model.factor_m == 1:
        return 0.5 * (lo + hi)
    return 0.5 * (lo + hi - eps0)


def dirichlet_exhaustion(xop: CrossSectionOperator, schedule: ExhaustionSchedule, N: int = DEFAULT_N) -> SpectralResult:
    if not isinstance(xop.model.spec, EuclideanFactor):
        raise SpectralError(f"{xop.model.spec.label}: exhaustion needs a link with nonempty singular set")
    if not schedule.eps_list:
        raise SpectralError("schedule is empty")
    template = SuspensionTemplate(xop.model, xop.potential, N)
    problems = exhaustion(template, schedule)
    t_ref = _reference_angle(xop, schedule.eps_list[0])
    members = []
    mus = []
    for problem in problems:
        forms, pair, psi = _solve_problem(problem, xop.model.weight_factor)
        spline = CubicSpline(forms.nodes, psi)
        psi_ref = psi / float(spline(t_ref))
        members.append((problem.eps, forms, pair, psi, psi_ref))
        mus.append(pair.value)
    mus_arr = np.asarray(mus)
    violation = float(max(0.0, np.max(np.diff(mus_arr)))) if len(mus) > 1 else 0.0
    eps = np.asarray(schedule.eps_list)
    mu_ext, order = (None, None)
    psi_ext = None
    if len(mus) >= 3:
        ratio = eps[-2] / eps[-1]
        mu_ext, order = richardson(mus, ratio)
        if math.isfinite(order):
            psi_ext = _extrapolate_psi(members, ratio, order)
    eps_last, forms, pair, psi, psi_ref = members[-1]
    return SpectralResult(
        mu=pair.value,
        nodes=forms.nodes,
        psi=psi,
        n=xop.n,
        homogeneous=False,
        mu_sequence=[float(m) for m in mus],
        mu_extrapolated=mu_ext,
        order=order,
        analytic_order=_analytic_order(xop),
        eps_list=[float(e) for e in eps],
        iterations=pair.iterations,
        residual=pair.residual,
        monotone_violation=violation,
        psi_ref=psi_ref,
        psi_extrapolated=psi_ext,
        psi_extrapolated_nodes=forms.nodes if psi_ext is not None else None,
        reference_angle=t_ref,
        members=members,
        forms=forms,
        link_volume=xop.model.link_volume,
    )


def _extrapolate_psi(members, ratio: float, order: float) -> np.ndarray:
    """Richardson on ``log psi_ref`` of the last two members, on the finest grid."""
    _, forms_prev, _, _, ref_prev = members[-2]
    _, forms_last, _, _, ref_last = members[-1]
    t = forms_last.nodes
    lo, hi = forms_prev.nodes[0], forms_prev.nodes[-1]
    inside = (t >= lo) & (t <= hi)
    out = np.full(t.shape, np.nan)
    prev = np.exp(CubicSpline(forms_prev.nodes, np.log(ref_prev))(t[inside]))
    last = ref_last[inside]
    out[inside] = last + (last - prev) / (ratio**order - 1.0)
    return out


@dataclass
class WeightedEigenEstimate:
    windows: list
    values: list
    extrapolated: float
    coefficient: float
    N: int

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) <= 1e-12))

    def to_dict(self) -> dict:
        return {
            "windows": list(self.windows),
            "values": list(self.values),
            "extrapolated": self.extrapolated,
            "decay_coefficient": self.coefficient,
            "N": self.N,
            "monotone": self.monotone,
        }


def window_eigenvalue(model, potential: float, s_hat: float, S: float, N: int) -> float:
    """Lowest eigenvalue of ``int e^{(n-2)s}(f'^2 + V f^2) / int e^{(n-2)s} s_hat^2 f^2`` on ``[-S, S]``, Dirichlet."""
    forms = radial_forms(model, RadialGrid.window(S, N), potential, density=s_hat**2)
    return inverse_power_iteration(forms).value


def _fit_inverse_square(windows, values) -> tuple[float, float]:
    S = np.asarray(windows, dtype=float)
    A = np.column_stack([np.ones_like(S), S**-2])
    coef, *_ = np.linalg.lstsq(A, np.asarray(values, dtype=float), rcond=None)
    return float(coef[0]), float(coef[1])


def weighted_principal_eigenvalue(op: ShiftedOperator, model, windows: Sequence[float] = (5.0, 10.0, 20.0), N: int = 8000) -> WeightedEigenEstimate:
    """Skin-weighted principal eigenvalue ``lambda^s`` from log-radial Dirichlet windows.

    ``lambda(S) = lambda^s + O(S^{-2})``; the limit is fitted over the windows.
    """
    if not model.homogeneous or isinstance(model.spec, RoundLink):
        raise SpectralError(f"{model.spec.label}: weighted eigenvalue needs a homogeneous singular link")
    if op.lam != 0:
        raise SpectralError("weighted principal eigenvalue is defined for the unshifted operator (lambda = 0)")
    if list(windows) != sorted(windows):
        raise SpectralError("windows must be increasing")
    potential = float(potential_on_link(op.kind, model))
    values = [window_eigenvalue(model, potential, op.skin.s_hat, S, N) for S in windows]
    if len(windows) >= 2:
        limit, coef = _fit_inverse_square(windows, values)
    else:
        limit, coef = values[0], math.nan
    return WeightedEigenEstimate(list(map(float, windows)), values, limit, coef, N)


@dataclass(frozen=True)
class NeumannResult:
    value: float
    r_lo: float
    r_hi: float
    vector: np.ndarray = field(repr=False)


def neumann_eigenvalue(op: ShiftedOperator, model, patch: tuple[float, float], N: int = 400) -> NeumannResult:
    """Skin-weighted Neumann eigenvalue of ``int |grad f|^2 + |A|^2 f^2`` on a radial patch.

    The patch is ``[r_lo, r_hi] x`` (the symmetric link); natural conditions
    at both radial ends.
    """
    if not isinstance(op.kind, ABLaplacian):
        raise OperatorError("Neumann patch eigenvalues use the A+B Laplacian")
    if isinstance(model.spec, RoundLink) or op.skin.s_hat == 0:
        raise SpectralError("skin vanishes identically: the weighted Neumann eigenvalue is undefined")
    if not model.homogeneous:
        raise SpectralError(f"{model.spec.label}: radial patches need a homogeneous link")
    r_lo, r_hi = patch
    if not 0 < r_lo < r_hi:
        raise SpectralError(f"empty patch [{r_lo}, {r_hi}]")
    grid = RadialGrid.annulus(r_lo, r_hi, max(N, 16))
    forms = radial_forms(model, grid, float(potential_on_link(op.kind, model)), density=op.skin.s_hat**2, boundary=("natural", "natural"))
    pair = inverse_power_iteration(forms)
    return NeumannResult(pair.value, r_lo, r_hi, pair.vector)
