"""The metric skin transform ``s_w`` and its axioms.

For a width ``w > 0`` the transform at ``x`` is the largest curvature level
``c`` whose superlevel set ``{|A| >= c}`` is within distance ``w / c`` of
``x``; ``delta = 1 / s`` is the associated skin distance.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .geometry import ConeModel, EuclideanFactor, RoundLink, link_point

__all__ = [
    "SkinField",
    "PointCloud",
    "NumericSkin",
    "AxiomReport",
    "SkinError",
    "skin_closed_form",
    "skin_numeric",
    "skin_axiom_report",
    "feasibility_scan",
    "ray_cloud",
    "tube_interior",
    "MAX_SAMPLES",
]

log = logging.getLogger(__name__)

MAX_SAMPLES = 200_000
BISECTION_RTOL = 1e-10


class SkinError(ValueError):
    pass


@dataclass(frozen=True)
class SkinField:
    """Closed-form skin field of a catalog cone.

    ``s_hat`` is the link value ``r * s`` (or ``|y| * s`` for Euclidean
    factors, where ``y`` is the projection to the singular factor cone).
    """

    model: ConeModel
    w: float
    s_hat: float
    lipschitz_bound: float
    mode: str = "closed_form"

    def _radius(self, positions: np.ndarray) -> np.ndarray:
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        if isinstance(self.model.spec, EuclideanFactor):
            return np.linalg.norm(positions[:, self.model.factor_m :], axis=1)
        return np.linalg.norm(positions, axis=1)

    def eval(self, positions) -> np.ndarray:
        if self.s_hat == 0.0:
            return np.zeros(len(np.atleast_2d(positions)))
        return self.s_hat / self._radius(positions)

    def delta(self, positions) -> np.ndarray:
        if self.s_hat == 0.0:
            return np.full(len(np.atleast_2d(positions)), np.inf)
        return self._radius(positions) / self.s_hat

    def on_link(self, angle=None):
        """``s^x`` on the link: ``r * s(x)`` at ``r = 1``."""
        if self.model.homogeneous:
            return self.s_hat if angle is None else np.full(np.shape(angle), self.s_hat)
        return self.s_hat / np.cos(np.asarray(angle, dtype=float))


def skin_closed_form(model: ConeModel, w: float) -> SkinField:
    """Exact ``s_w`` on a catalog cone.

    With ``|A| = a / r`` the superlevel set ``{|A| >= c}`` is ``{r <= a/c}``
    and its radial distance tube of width ``w/c`` is ``{r <= (a+w)/c}``, so the
    supremum of feasible levels is ``(a+w)/r``.
    """
    if not w > 0:
        raise SkinError(f"w must be positive, got {w}")
    if isinstance(model.spec, RoundLink):
        return SkinField(model, float(w), 0.0, 0.0)
    a = math.sqrt(model.base_a2 if isinstance(model.spec, EuclideanFactor) else float(model.a2_link))
    return SkinField(model, float(w), a + w, 1.0 / (a + w))


@dataclass(frozen=True)
class PointCloud:
    """Samples of a hypersurface with ``|A|`` values and a distance graph."""

    positions: np.ndarray
    abs_a: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        if len(self.positions) != len(self.abs_a):
            raise SkinError("positions and absA lengths differ")
        if len(self.positions) > MAX_SAMPLES:
            raise SkinError(f"cloud has {len(self.positions)} samples, cap is {MAX_SAMPLES}")
        if len(self.edges) and np.any(self.lengths <= 0):
            raise SkinError("edge lengths must be positive")

    @property
    def size(self) -> int:
        return len(self.abs_a)

    def graph(self) -> sparse.csr_matrix:
        n = self.size
        i, j = self.edges[:, 0], self.edges[:, 1]
        g = sparse.coo_matrix((self.lengths, (i, j)), shape=(n, n))
        return (g + g.T).tocsr()

    def check_connected(self) -> None:
        ncomp, labels = csgraph.connected_components(self.graph(), directed=False)
        if ncomp > 1:
            sizes = np.bincount(labels)
            main = int(np.argmax(sizes))
            bad = np.flatnonzero(labels != main)
            raise SkinError(
                f"cloud graph is disconnected: {ncomp} components; "
                f"component {int(labels[bad[0]])} with {int(sizes[labels[bad[0]]])} samples "
                f"(first sample {int(bad[0])}) is cut off"
            )

    def scaled(self, lam: float) -> "PointCloud":
        """The cloud of the dilated hypersurface ``lam * H``."""
        return PointCloud(self.positions * lam, self.abs_a / lam, self.edges, self.lengths * lam)

    def to_csv(self, points_path, edges_path) -> None:
        dim = self.positions.shape[1]
        with open(points_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(dim)] + ["absA"])
            for pos, a in zip(self.positions, self.abs_a):
                writer.writerow([repr(float(v)) for v in pos] + [repr(float(a))])
        with open(edges_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "length"])
            for (i, j), length in zip(self.edges, self.lengths):
                writer.writerow([int(i), int(j), repr(float(length))])

    @classmethod
    def from_csv(cls, points_path, edges_path) -> "PointCloud":
        pts = np.loadtxt(Path(points_path), delimiter=",", skiprows=1, ndmin=2)
        edges = np.loadtxt(Path(edges_path), delimiter=",", skiprows=1, ndmin=2)
        if edges.size == 0:
            edges = np.zeros((0, 3))
        return cls(pts[:, :-1], pts[:, -1], edges[:, :2].astype(np.int64), edges[:, 2])


def ray_cloud(model: ConeModel, r_min: float, r_max: float, samples: int, spacing: str = "uniform", angle: float = 0.0) -> PointCloud:
    """Samples along the ray through a regular link point, joined as a path graph.

    Along a ray the intrinsic distance is ``|r - r'|`` and ``|A|`` is the
    closed form, so the cloud carries the exact one-dimensional geometry.
    ``spacing`` is ``"uniform"`` in ``r`` or ``"geometric"`` (uniform in log r).
    """
    if samples < 2:
        raise SkinError("need at least two samples")
    if not 0 < r_min < r_max:
        raise SkinError("need 0 < r_min < r_max")
    if spacing == "uniform":
        r = np.linspace(r_min, r_max, samples)
    elif spacing == "geometric":
        r = np.geomspace(r_min, r_max, samples)
    else:
        raise SkinError(f"unknown spacing {spacing!r}")
    omega = link_point(model, angle)
    positions = r[:, None] * omega[None, :]
    if model.homogeneous:
        abs_a = math.sqrt(float(model.a2_link)) / r
    else:
        abs_a = np.sqrt(model.a2(angle)) / r
    edges = np.column_stack([np.arange(samples - 1), np.arange(1, samples)])
    return PointCloud(positions, np.asarray(abs_a, dtype=float) * np.ones(samples), edges, np.diff(r))


def tube_interior(model: ConeModel, radii, r_min: float, w: float) -> np.ndarray:
    """Ray samples whose optimal tube contact point ``r a / (a + w)`` lies inside ``[r_min, ...)``.

    Closer to the inner end of a truncated ray the maximizing sample is
    missing and the discrete transform underestimates the exact one.
    """
    r = np.asarray(radii, dtype=float)
    a = math.sqrt(model.base_a2 if isinstance(model.spec, EuclideanFactor) else float(model.a2_link))
    if a == 0:
        return np.ones(r.shape, dtype=bool)
    return r >= r_min * (a + w) / a


@dataclass(frozen=True)
class NumericSkin:
    values: np.ndarray
    saturated: np.ndarray
    c_max: float
    w: float
    mode: str = "numeric"

    @property
    def delta(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.values > 0, 1.0 / np.where(self.values > 0, self.values, 1.0), np.inf)


class _Feasibility:
    """Evaluates ``dist(x, {|A| >= c}) <= w / c`` for a batch of sources."""

    def __init__(self, dist_rows: np.ndarray, a_sorted_desc: np.ndarray, order: np.ndarray, w: float):
        self.neg_a = -a_sorted_desc
        self.cummin = np.minimum.accumulate(dist_rows[:, order], axis=1)
        self.w = w

    def __call__(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        count = np.searchsorted(self.neg_a, -c, side="right")
        rows = np.arange(len(c))
        nearest = np.where(count > 0, self.cummin[rows, np.maximum(count - 1, 0)], np.inf)
        return nearest <= self.w / c


def _batches(limits: np.ndarray, batch: int):
    order = np.argsort(limits, kind="stable")
    for start in range(0, len(order), batch):
        yield order[start : start + batch]


def skin_numeric(cloud: PointCloud, w: float, batch: int = 256, with_distances: bool = False) -> NumericSkin:
    """Per-sample ``s_w`` from graph distances, by bisection on the level ``c``.

    Levels above ``|A|(x)`` can only be reached through samples within
    ``w / |A|(x)`` of ``x``, which bounds every shortest-path search.
    """
    if not w > 0:
        raise SkinError(f"w must be positive, got {w}")
    abs_a = np.asarray(cloud.abs_a, dtype=float)
    n = cloud.size
    if n == 0:
        raise SkinError("empty cloud")
    if not np.any(abs_a > 0):
        return NumericSkin(np.zeros(n), np.zeros(n, dtype=bool), 0.0, float(w))
    graph = cloud.graph()
    cloud.check_connected()

    positive = abs_a[abs_a > 0]
    c_lo0 = positive.min() / 2.0
    c_max = 2.0 * positive.max()
    order = np.argsort(-abs_a, kind="stable")

    values = np.zeros(n)
    with np.errstate(divide="ignore"):
        limits = np.where(abs_a > 0, w / np.where(abs_a > 0, abs_a, 1.0), np.inf)
    for idx in _batches(limits, batch):
        limit = float(limits[idx].max())
        dist = csgraph.dijkstra(graph, directed=False, indices=idx, limit=limit * (1 + 1e-12))
        # only samples inside the search limit can be nearest; keep their global order
        reached = np.isfinite(dist).any(axis=0)
        local = order[reached[order]]
        feasible = _Feasibility(dist, abs_a[local], local, w)
        lo = np.maximum(abs_a[idx], c_lo0)
        ok = feasible(lo)
        while not np.all(ok):
            # far from all curvature: shrink the lower bracket until feasible
            lo = np.where(ok, lo, lo / 2.0)
            ok = feasible(lo)
        hi = np.full(len(idx), c_max)
        top = feasible(hi)
        lo = np.where(top, hi, lo)
        for _ in range(200):
            active = (hi - lo) > BISECTION_RTOL * hi
            if not np.any(active):
                break
            mid = 0.5 * (lo + hi)
            good = feasible(mid)
            lo = np.where(active & good, mid, lo)
            hi = np.where(active & ~good, mid, hi)
        values[idx] = lo
    saturated = values >= c_max * (1 - BISECTION_RTOL)
    if np.any(saturated):
        log.warning("%d samples saturated at c_max=%g", int(saturated.sum()), c_max)
    return NumericSkin(values, saturated, c_max, float(w))


def feasibility_scan(cloud: PointCloud, w: float, sample: int, grid: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Truth values of the feasibility predicate for one sample over a ``grid``-point level scan."""
    abs_a = np.asarray(cloud.abs_a, dtype=float)
    dist = csgraph.dijkstra(cloud.graph(), directed=False, indices=[sample])
    order = np.argsort(-abs_a, kind="stable")
    feasible = _Feasibility(dist, abs_a[order], order, w)
    c_max = 2.0 * abs_a.max()
    levels = np.linspace(c_max / grid, c_max, grid)
    truth = np.array([feasible(np.array([c]))[0] for c in levels])
    return levels, truth


@dataclass
class AxiomReport:
    dominance_margin: float
    lipschitz: float
    lipschitz_bound: float
    scaling_deviation: float
    samples: int
    notes: list = field(default_factory=list)

    @property
    def dominance_ok(self) -> bool:
        return self.dominance_margin >= -1e-12

    def to_dict(self) -> dict:
        return {
            "dominance_margin": self.dominance_margin,
            "lipschitz": self.lipschitz,
            "lipschitz_bound": self.lipschitz_bound,
            "scaling_deviation": self.scaling_deviation,
            "samples": self.samples,
        }


def _edge_lipschitz(delta: np.ndarray, cloud: PointCloud) -> float:
    if not len(cloud.edges):
        return 0.0
    i, j = cloud.edges[:, 0], cloud.edges[:, 1]
    di, dj = delta[i], delta[j]
    both_inf = np.isinf(di) & np.isinf(dj)
    with np.errstate(invalid="ignore"):
        ratio = np.abs(di - dj) / cloud.lengths
    ratio = np.where(both_inf, 0.0, ratio)  # delta = inf on both ends: |delta - delta| = 0 by convention
    return float(np.max(ratio))


def skin_axiom_report(field: SkinField | NumericSkin, cloud: PointCloud, scale: float = 2.0) -> AxiomReport:
    """Dominance, discrete Lipschitz constant of ``delta`` and scaling anticommutation."""
    if isinstance(field, SkinField):
        values = field.eval(cloud.positions)
        delta = field.delta(cloud.positions)
        scaled = field.eval(cloud.positions * scale) * scale
        bound = field.lipschitz_bound
    else:
        if len(field.values) != cloud.size:
            raise SkinError("field and cloud sample counts differ")
        values = field.values
        delta = field.delta
        scaled = skin_numeric(cloud.scaled(scale), field.w).values * scale
        bound = 1.0 / field.w
    margin = float(np.min(values - cloud.abs_a))
    with np.errstate(invalid="ignore", divide="ignore"):
        dev = np.where(values > 0, np.abs(scaled - values) / np.where(values > 0, values, 1.0), np.abs(scaled - values))
    return AxiomReport(margin, _edge_lipschitz(delta, cloud), bound, float(np.max(dev)), cloud.size)
