"""Hardy constants: direct Rayleigh minimization and the cover + Neumann pipeline."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csgraph

from .geometry import ConeModel, RoundLink
from .mesh import RadialGrid
from .operators import ABLaplacian, Jacobi, OperatorKind, ShiftedOperator, potential_on_link, quadratic_form
from .skin import NumericSkin, PointCloud, SkinField
from .spectral import neumann_eigenvalue, weighted_principal_eigenvalue, window_eigenvalue

__all__ = [
    "HardyError",
    "Cover",
    "HardyReport",
    "NormCheck",
    "direct_hardy",
    "build_cover",
    "cover_lower_bound",
    "cover_neumann_values",
    "hardy_report",
    "h12_norm",
    "gradient_only_quotient",
    "curvature_only_quotient",
]

log = logging.getLogger(__name__)


class HardyError(ValueError):
    pass


@dataclass(frozen=True)
class DirectHardy:
    windows: list
    values: list
    extrapolated: float
    at_largest: float

    def to_dict(self) -> dict:
        return {"windows": self.windows, "values": self.values, "extrapolated": self.extrapolated, "at_largest_window": self.at_largest}


def direct_hardy(model: ConeModel, skin: SkinField, windows: Sequence[float] = (5.0, 10.0, 20.0), N: int = 8000) -> DirectHardy:
    """Lowest value of ``(int |grad f|^2 + |A|^2 f^2) / int s^2 f^2`` on log-radial windows.

    Angular modes only raise the quotient on a homogeneous link, so radial
    test functions suffice.
    """
    if isinstance(model.spec, RoundLink):
        raise HardyError("flat cone: the skin vanishes and the Hardy inequality is trivial")
    op = ShiftedOperator(ABLaplacian(), 0.0, skin)
    est = weighted_principal_eigenvalue(op, model, windows, N)
    return DirectHardy(est.windows, est.values, est.extrapolated, est.values[-1])


def gradient_only_quotient(model: ConeModel, skin: SkinField, S: float, N: int = 4000) -> float:
    """``min int |grad f|^2 / int s^2 f^2`` on the window ``[-S, S]``."""
    return window_eigenvalue(model, 0.0, skin.s_hat, S, N)


def curvature_only_quotient(model: ConeModel, skin: SkinField) -> float:
    """``int |A|^2 f^2 / int s^2 f^2``; the ratio ``|A|^2 / s^2`` is the constant ``a^2 / s_hat^2``."""
    return float(model.a2_link) / skin.s_hat**2


@dataclass
class Cover:
    centers: np.ndarray
    radii: np.ndarray
    skin_values: np.ndarray
    xi: float
    covering_number: int
    separated: bool
    covered: bool
    positions: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.centers)

    def to_dict(self) -> dict:
        return {
            "centers": int(self.size),
            "xi": self.xi,
            "covering_number": self.covering_number,
            "separated": self.separated,
            "covered": self.covered,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            dim = self.positions.shape[1]
            writer.writerow([f"x{i + 1}" for i in range(dim)] + ["skin", "theta"])
            for idx, s, theta in zip(self.centers, self.skin_values, self.radii):
                writer.writerow([repr(float(v)) for v in self.positions[idx]] + [repr(float(s)), repr(float(theta))])


def build_cover(cloud: PointCloud, skin_values, xi: float, lipschitz: Optional[float] = None) -> Cover:
    """Greedy skin-adapted cover with balls of radius ``Theta(p) = xi / s(p)``.

    Samples are scanned in increasing skin value (largest balls first) and
    accepted when no accepted ball contains them.  In this order every later
    ball is no larger than the earlier ones, so accepted centres are mutually
    outside each other's balls.
    """
    values = np.asarray(skin_values.values if isinstance(skin_values, NumericSkin) else skin_values, dtype=float)
    if values.shape != (cloud.size,):
        raise HardyError("skin values and cloud sizes differ")
    regular = values > 0
    if not np.any(regular):
        raise HardyError("empty regular part: the skin vanishes on every sample")
    if not xi > 0:
        raise HardyError("xi must be positive")
    if lipschitz is not None and xi >= 1e-3 / lipschitz:
        log.warning("xi=%g is not small against 1/(1000 L)=%g; proceeding", xi, 1e-3 / lipschitz)
    graph = cloud.graph()
    theta = np.where(regular, xi / np.where(regular, values, 1.0), 0.0)
    order = np.flatnonzero(regular)[np.argsort(values[regular], kind="stable")]
    count = np.zeros(cloud.size, dtype=np.int64)
    centers = []
    for p in order:
        if count[p] > 0:
            continue
        dist = csgraph.dijkstra(graph, directed=False, indices=int(p), limit=theta[p] * (1 + 1e-12))
        count[dist <= theta[p]] += 1
        centers.append(int(p))
    centers = np.asarray(centers, dtype=np.int64)
    cnt = np.zeros(cloud.size, dtype=np.int64)
    separated = True
    for c in centers:
        dist = csgraph.dijkstra(graph, directed=False, indices=int(c), limit=theta[c] * (1 + 1e-12))
        inside = dist <= theta[c]
        cnt[inside] += 1
        others = centers[inside[centers]]
        if np.any(others != c):
            separated = False
    covered = bool(np.all(cnt[regular] > 0))
    return Cover(centers, theta[centers], values[centers], float(xi), int(cnt.max()), separated, covered, cloud.positions)


def cover_neumann_values(cover: Cover, model: ConeModel, skin: SkinField, r_max: float, N: int = 200) -> tuple[list, float]:
    """Neumann eigenvalues of every ball (as a radial patch) and of the outer boundary annulus."""
    op = ShiftedOperator(ABLaplacian(), 0.0, skin)
    radii = np.linalg.norm(cover.positions[cover.centers], axis=1)
    per_ball = []
    for r, theta in zip(radii, cover.radii):
        lo = max(r - theta, 1e-300)
        per_ball.append(neumann_eigenvalue(op, model, (lo, r + theta), N).value)
    far = int(np.argmax(radii))
    inner_edge = radii[far] + cover.radii[far]
    boundary = neumann_eigenvalue(op, model, (inner_edge, max(r_max, 2.0 * inner_edge)), N).value
    return per_ball, boundary


def cover_lower_bound(cover_or_count, per_ball_neumann: Sequence[float], boundary_patch_neumann: float) -> float:
    """``min(nu) / (c + 1)`` with ``c`` the covering number."""
    c = cover_or_count.covering_number if isinstance(cover_or_count, Cover) else int(cover_or_count)
    values = list(per_ball_neumann) + [boundary_patch_neumann]
    if any(not v > 0 for v in values):
        raise HardyError("a patch Neumann eigenvalue is not positive: failed patch solve")
    return min(values) / (c + 1)


@dataclass
class HardyReport:
    k_direct: float
    k_cover: float
    per_ball_min: float
    boundary_nu: float
    covering_number: int
    metric_constant: float
    classical_constant: float
    direct: DirectHardy = field(repr=False, default=None)
    cover: Cover = field(repr=False, default=None)
    gradient_only: list = field(default_factory=list)
    curvature_only: float = math.nan

    @property
    def ordered(self) -> bool:
        return 0 < self.k_cover <= self.k_direct + 1e-6

    def to_dict(self) -> dict:
        return {
            "k_direct": self.k_direct,
            "k_direct_windows": self.direct.to_dict() if self.direct else None,
            "k_cover": self.k_cover,
            "per_ball_neumann_min": self.per_ball_min,
            "boundary_patch_neumann": self.boundary_nu,
            "covering_number": self.covering_number,
            "metric_hardy_constant": self.metric_constant,
            "classical_hardy_constant": self.classical_constant,
            "gradient_only_quotients": self.gradient_only,
            "curvature_only_quotient": self.curvature_only,
            "cover": self.cover.to_dict() if self.cover else None,
            "ordered": self.ordered,
        }


def hardy_report(model: ConeModel, skin: SkinField, cover: Cover, r_max: float, windows=(5.0, 10.0, 20.0), N: int = 8000, patch_N: int = 200) -> HardyReport:
    direct = direct_hardy(model, skin, windows, N)
    # the Hardy constant is an infimum over windows: the extrapolated limit is the estimate
    k_direct = direct.extrapolated
    per_ball, boundary = cover_neumann_values(cover, model, skin, r_max, patch_N)
    k_cover = cover_lower_bound(cover, per_ball, boundary)
    lipschitz = skin.lipschitz_bound
    grads = [gradient_only_quotient(model, skin, S, max(400, N // 2)) for S in windows]
    half = (model.n - 2) / 2.0
    return HardyReport(
        k_direct=k_direct,
        k_cover=k_cover,
        per_ball_min=float(min(per_ball)),
        boundary_nu=float(boundary),
        covering_number=cover.covering_number,
        metric_constant=k_direct / lipschitz**2,
        classical_constant=half * half,
        direct=direct,
        cover=cover,
        gradient_only=grads,
        curvature_only=curvature_only_quotient(model, skin),
    )


@dataclass(frozen=True)
class NormCheck:
    h12: float
    form: float
    skin_weighted: float
    gradient: float
    lambda_s: float
    a_L: float
    beta_star: float

    @property
    def adapted_ok(self) -> bool:
        return self.form >= self.lambda_s * self.skin_weighted - 1e-12 * abs(self.form)

    @property
    def equivalence_ok(self) -> bool:
        return self.beta_star * self.form >= self.h12 - 1e-12 * abs(self.h12)

    def to_dict(self) -> dict:
        return {
            "h12": self.h12,
            "form": self.form,
            "skin_weighted": self.skin_weighted,
            "lambda_s": self.lambda_s,
            "a_L": self.a_L,
            "beta_star": self.beta_star,
            "adapted_ok": self.adapted_ok,
            "equivalence_ok": self.equivalence_ok,
        }


def h12_norm(f, model: ConeModel, skin: SkinField, grid: RadialGrid, lambda_s: float, kind: OperatorKind = Jacobi()) -> NormCheck:
    """``||f||^2 = int |grad f|^2 + s^2 f^2`` with the companions ``int f L f`` and ``int s^2 f^2``.

    ``a_L`` bounds the potential by ``|V| <= a_L s^2``; the equivalence
    constant is ``beta* = 1 + (a_L + 1) / lambda^s``.
    """
    op = ShiftedOperator(kind, 0.0, skin)
    fv = quadratic_form(op, model, f, grid)
    a_L = abs(float(potential_on_link(kind, model))) / skin.s_hat**2
    beta_star = 1.0 + (a_L + 1.0) / lambda_s
    return NormCheck(fv.gradient + fv.skin_weighted, fv.form, fv.skin_weighted, fv.gradient, lambda_s, a_L, beta_star)
