"""Radial exponents, eigenvalue/exponent bounds, polar residuals and L^p diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .mesh import RadialGrid
from .operators import Conformal, DimShiftedConformal, Jacobi, OperatorKind
from .spectral import SpectralResult

__all__ = [
    "ExponentError",
    "ExponentPair",
    "BoundRecord",
    "BoundReport",
    "ResidualReport",
    "LpReport",
    "exponents_from_mu",
    "check_bounds",
    "radial_residual",
    "scaling_fixed_point_deviation",
    "lp_report",
    "radial_lq_report",
    "fitted_order",
]

SQRT_3_4 = math.sqrt(0.75)
SQRT_2_3 = math.sqrt(2.0 / 3.0)


class ExponentError(ValueError):
    pass


@dataclass(frozen=True)
class ExponentPair:
    alpha_plus: float
    alpha_minus: float
    discriminant: float
    n: int
    mu: float

    @property
    def separation(self) -> float:
        return self.alpha_plus - self.alpha_minus

    def vieta_error(self) -> float:
        s = abs(self.alpha_plus + self.alpha_minus + (self.n - 2))
        p = abs(self.alpha_plus * self.alpha_minus + self.mu)
        return max(s, p / max(1.0, abs(self.mu)))

    def to_dict(self) -> dict:
        return {
            "alpha_plus": self.alpha_plus,
            "alpha_minus": self.alpha_minus,
            "discriminant": self.discriminant,
            "separation": self.separation,
        }


def exponents_from_mu(mu: float, n: int) -> ExponentPair:
    """Roots of ``alpha^2 + (n-2) alpha - mu = 0``."""
    half = (n - 2) / 2.0
    disc = half * half + mu
    if disc < 0:
        raise ExponentError(f"discriminant {disc:.6g} < 0: no positive radial solutions (shift beyond the skin-adapted range)")
    root = math.sqrt(disc)
    # numerically stable pair: the larger-magnitude root first, the other from Vieta
    if half >= 0:
        am = -half - root
        ap = -mu / am if am != 0 else -half + root
    else:
        ap = -half + root
        am = -mu / ap if ap != 0 else -half - root
    return ExponentPair(float(ap), float(am), float(disc), n, float(mu))


@dataclass(frozen=True)
class BoundRecord:
    name: str
    relation: str
    required: float
    measured: float
    margin: float
    strict: bool = False

    @property
    def satisfied(self) -> bool:
        return self.margin > 0 if self.strict else self.margin >= 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "relation": self.relation,
            "required": self.required,
            "measured": self.measured,
            "margin": self.margin,
            "satisfied": self.satisfied,
        }


@dataclass
class BoundReport:
    records: list = field(default_factory=list)

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.records)

    @property
    def min_margin(self) -> float:
        return min((r.margin for r in self.records), default=math.inf)

    def by_name(self, name: str) -> BoundRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"all_satisfied": self.all_satisfied, "records": [r.to_dict() for r in self.records]}


def _ge(name, measured, required, strict=False, tol=0.0):
    rel = ">" if strict else ">="
    return BoundRecord(name, f"measured {rel} required", float(required), float(measured), float(measured - required + tol), strict)


def _le(name, measured, required, strict=False, tol=0.0):
    rel = "<" if strict else "<="
    return BoundRecord(name, f"measured {rel} required", float(required), float(measured), float(required - measured + tol), strict)


def check_bounds(kind: OperatorKind, n: int, k: int, lam: float, result: SpectralResult, pair: ExponentPair, tol: float = 0.0) -> BoundReport:
    """Evaluate the eigenvalue and exponent bounds that apply to ``kind``.

    ``n`` is the dimension the exponents refer to and ``k`` the cone
    dimension entering the dimensionally shifted bounds.  ``tol`` widens
    non-strict bounds for numerically extrapolated eigenvalues.
    """
    mu = result.mu_limit
    half = (n - 2) / 2.0
    recs = []
    if isinstance(kind, Conformal):
        recs += [
            _ge("conformal.mu_lower", mu, -0.25 * half * half, tol=tol),
            _ge("conformal.alpha_plus_lower", pair.alpha_plus, -(1 - SQRT_3_4) * half, tol=tol),
            _le("conformal.alpha_minus_upper", pair.alpha_minus, -(1 + SQRT_3_4) * half, tol=tol),
            _ge("conformal.alpha_minus_strict", pair.alpha_minus, -(n - 2), strict=True),
            _ge("conformal.separation", pair.separation, SQRT_3_4 * (n - 2), tol=tol),
        ]
    elif isinstance(kind, DimShiftedConformal):
        halfk = (k - 2) / 2.0
        recs += [
            _ge("dimshift.mu_lower", mu, -((k - 2) ** 2) / 12.0, tol=tol),
            _ge("dimshift.alpha_plus_lower", pair.alpha_plus, -(1 - SQRT_2_3) * halfk, tol=tol),
            _le("dimshift.alpha_minus_upper", pair.alpha_minus, -(1 + SQRT_2_3) * halfk, tol=tol),
            _ge("dimshift.alpha_minus_strict", pair.alpha_minus, -(k - 2), strict=True),
            _ge("dimshift.separation", pair.separation, SQRT_2_3 * (k - 2), tol=tol),
        ]
    elif isinstance(kind, Jacobi):
        recs.append(_ge("jacobi.mu_critical", mu, -half * half, tol=tol))
    else:
        raise ExponentError(f"no bounds registered for {kind.name}")
    recs.append(_ge("generic.mu_strict", mu, -half * half, strict=True))
    if lam > 0:
        recs.append(_le("adapted.alpha_plus_negative", pair.alpha_plus, 0.0, strict=True))
    return BoundReport(recs)


def fitted_order(h: Sequence[float], err: Sequence[float]) -> float:
    h = np.log(np.asarray(h, dtype=float))
    e = np.log(np.asarray(err, dtype=float))
    return float(np.polyfit(h, e, 1)[0])


@dataclass
class ResidualReport:
    resolutions: list
    steps: list
    residuals: list
    order: float
    link_defect: float = 0.0

    def to_dict(self) -> dict:
        return {
            "resolutions": self.resolutions,
            "steps": self.steps,
            "residuals": self.residuals,
            "order": self.order,
            "link_defect": self.link_defect,
        }


def _polar_residual(alpha: float, n: int, grid: RadialGrid, link_values: np.ndarray, link_action: np.ndarray) -> float:
    """Max interior residual of ``psi(w) r^alpha`` under the centred polar operator.

    ``L v = r^{-2} (-v_ss - (n-2) v_s + L^x v)`` in ``s = ln r``; ``link_action``
    is ``L^x psi`` on the link samples.
    """
    s = grid.s
    h = grid.h
    radial = np.exp(alpha * s)
    v = link_values[:, None] * radial[None, :]
    v_ss = (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / h**2
    v_s = (v[:, 2:] - v[:, :-2]) / (2 * h)
    lx = link_action[:, None] * radial[None, 1:-1]
    res = np.exp(-2 * s[1:-1])[None, :] * (-v_ss - (n - 2) * v_s + lx)
    return float(np.max(np.abs(res)))


def radial_residual(pair: ExponentPair, result: SpectralResult, annulus: tuple[float, float], resolutions: Sequence[int] = (200, 400, 800), which: str = "plus") -> ResidualReport:
    """Residual of ``Psi = psi * r^alpha`` under the discretized polar operator, per resolution.

    The link factor acts through its eigenvalue, so the residuals measure the
    radial discretization alone.  How well ``psi`` solves the discrete link
    problem is reported separately as ``link_defect`` (``max |L^x psi - mu psi| / max psi``),
    a resolution-independent floor set by the eigensolver tolerance.
    """
    r_lo, r_hi = annulus
    if r_lo <= 0:
        raise ExponentError("annulus must not touch r = 0")
    defect = 0.0
    if result.homogeneous:
        values = np.array([result.psi_constant])
    else:
        # psi is the finest truncated eigenvector: pair it with its own eigenvalue,
        # otherwise the residual floors at |mu_N - mu*| psi
        pair = exponents_from_mu(result.mu, pair.n)
        forms = result.forms
        values = result.psi
        action = forms.apply(values) / forms.mass
        defect = float(np.max(np.abs(action - result.mu * values)) / np.max(np.abs(values)))
        values = values[1:-1]
    alpha = pair.alpha_plus if which == "plus" else pair.alpha_minus
    action = result.mu * values
    res, steps = [], []
    for N in resolutions:
        grid = RadialGrid.annulus(r_lo, r_hi, N)
        res.append(_polar_residual(alpha, pair.n, grid, values, action))
        steps.append(grid.h)
    if all(r > 0 for r in res) and len(res) > 1:
        order = fitted_order(steps, res)
    else:
        order = math.nan
    return ResidualReport(list(resolutions), steps, res, order, defect)


def scaling_fixed_point_deviation(pair: ExponentPair, result: SpectralResult, eta: float = 3.0, annulus=(0.5, 2.0), N: int = 64) -> float:
    """``max |Psi(eta x) eta^{-alpha} - Psi(x)| / |Psi(x)|`` on grid samples."""
    r = RadialGrid.annulus(*annulus, N).r
    psi = np.array([result.psi_constant]) if result.homogeneous else result.psi
    base = psi[:, None] * r[None, :] ** pair.alpha_plus
    scaled = psi[:, None] * (eta * r[None, :]) ** pair.alpha_plus * eta ** (-pair.alpha_plus)
    return float(np.max(np.abs(scaled - base) / np.abs(base)))


@dataclass
class LpReport:
    exponents: list
    classification: list
    increment_orders: list
    guaranteed_limit: float
    guaranteed: list
    partial_integrals: list
    kind: str = "link"
    ratio_constant: Optional[float] = None

    def classify(self, p: float) -> str:
        return self.classification[self.exponents.index(p)]

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.exponents)
        seen_divergent = False
        for i in order:
            if self.classification[i] == "divergent":
                seen_divergent = True
            elif seen_divergent:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "exponents": self.exponents,
            "classification": self.classification,
            "increment_orders": self.increment_orders,
            "guaranteed_limit": self.guaranteed_limit,
            "within_guaranteed_range": self.guaranteed,
            "ratio_constant": self.ratio_constant,
        }


def _shell_fit(levels: np.ndarray, increments: np.ndarray) -> float:
    positive = increments > 0
    if positive.sum() < 2:
        return -math.inf
    return float(np.polyfit(np.log(levels[positive]), np.log(increments[positive]), 1)[0])


def lp_report(result: SpectralResult, model, p_list: Sequence[float], shells: int = 5, clearance: float = 10.0) -> LpReport:
    """Growth of ``int_{D} W psi^p`` over nested truncations toward the singular set.

    Truncation levels ``u_j = clearance * eps_min * 2^j`` (distance to the
    singular end) use the extrapolated ground state where available.
    Increments over dyadic shells scale like ``u^gamma``; ``gamma > 0`` means
    the partial integrals converge.
    """
    k = model.n
    limit = (k - 1) / (k - 3) if k > 3 else math.inf
    if result.homogeneous:
        l1 = result.psi_constant * result.link_volume
        return LpReport(
            list(map(float, p_list)), ["convergent"] * len(p_list), [math.inf] * len(p_list), limit,
            [p < limit for p in p_list], [], "link", ratio_constant=l1 / result.psi_constant,
        )
    if not result.mu_sequence:
        raise ExponentError("L^p diagnostics need exhaustion data")
    t = result.nodes
    psi = result.psi_extrapolated if result.psi_extrapolated is not None else result.psi_ref
    ok = np.isfinite(psi) & (psi > 0)
    t, psi = t[ok], psi[ok]
    hi_end = model.domain[1]
    u = hi_end - np.abs(t) if model.factor_m == 1 else hi_end - t
    levels = clearance * min(result.eps_list) * 2.0 ** np.arange(shells + 1)
    weight = model.weight(t) * model.weight_factor
    log_spline = CubicSpline(t, np.log(psi))
    classes, orders, partials = [], [], []
    for p in p_list:
        integrand = weight * psi**p
        vals = []
        for lev in levels:
            mask = u >= lev
            vals.append(float(integrate.trapezoid(integrand[mask], t[mask])))
        vals = np.asarray(vals)
        increments = vals[:-1] - vals[1:]  # shell between levels[j] and levels[j+1]
        gamma = _shell_fit(levels[:-1], increments)
        orders.append(gamma)
        classes.append("convergent" if gamma > 0 else "divergent")
        partials.append(vals[::-1].tolist())
    inf_psi = float(np.exp(np.min(log_spline(t))))
    mask = u >= levels[0]
    l1 = float(integrate.trapezoid((weight * psi)[mask], t[mask]))
    return LpReport(
        list(map(float, p_list)), classes, orders, limit, [p < limit for p in p_list], partials, "link", ratio_constant=l1 / inf_psi
    )


def radial_lq_report(pair: ExponentPair, result: SpectralResult, model, q_list: Sequence[float], shells: int = 6) -> LpReport:
    """Integrability of ``Psi_+ = psi r^{alpha_+}`` on ``B_1`` via dyadic radial shells.

    ``int_{rho/2 < r < rho} |Psi|^q dV = (int_link psi^q) * int r^{q alpha + n - 1} dr``;
    shell integrals scale like ``rho^{q alpha + n}``.
    """
    k = model.n
    limit = k / (k - 2)
    classes, orders, partials = [], [], []
    for q in q_list:
        if result.homogeneous:
            link_q = result.psi_constant**q * result.link_volume
        else:
            link_q = float(integrate.trapezoid(model.weight(result.nodes) * model.weight_factor * np.abs(result.psi) ** q, result.nodes))
        expo = q * pair.alpha_plus + pair.n - 1
        rho = 2.0 ** -np.arange(shells + 1)
        shell = np.array([integrate.quad(lambda r: r**expo, b / 2, b, epsabs=0, epsrel=1e-12)[0] for b in rho]) * link_q
        gamma = _shell_fit(rho, shell)
        orders.append(gamma)
        classes.append("convergent" if gamma > 0 else "divergent")
        partials.append(np.cumsum(shell).tolist())
    return LpReport(list(map(float, q_list)), classes, orders, limit, [q < limit for q in q_list], partials, "radial")
