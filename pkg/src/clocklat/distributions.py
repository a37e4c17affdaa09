"""Exact and limiting probability distributions over the energy lattice.

The n-clock state puts multinomial-aggregated mass on each distinct total
energy.  For large n this mass approaches the lattice-sampled multivariate
normal density times the unit-cell volume; in the unit-spacing coordinates
used here the unit cell is 1.  Everything is computed in log space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from ._util import group_logsumexp, lexsorted, logsumexp, segment_logsumexp
from .errors import CapExceededError
from .lattice import (
    DEFAULT_ENUMERATION_CAP,
    ClockSpec,
    enumerate_partitions,
    moments,
    partition_count,
    smith_vectors,
)

_NORMALIZATION_TOL = 1e-10

# above this many occupation vectors, window queries switch to per-site
# fiber enumeration instead of full lattice enumeration
_FULL_ENUMERATION_LIMIT = 2_000_000


class EnergyDistribution:
    """Normalized probability masses over distinct-energy lattice points.

    Points are stored lexicographically sorted with their log-masses; the
    distribution must sum to one within 1e-10 and every stored mass is
    strictly positive.  ``discarded_mass_bound`` records mass dropped by a
    declared truncation (zero for exact constructions).
    """

    def __init__(self, points, log_masses, copies=None, spec=None, discarded_mass_bound=0.0):
        points = np.atleast_2d(np.asarray(points, dtype=np.int64))
        log_masses = np.asarray(log_masses, dtype=float).reshape(-1)
        if len(points) != len(log_masses):
            raise ValueError("points and masses disagree in length")
        if len(points) == 0:
            raise ValueError("empty distribution")
        if not np.all(np.isfinite(log_masses)):
            raise ValueError("all masses must be positive and finite")
        order = lexsorted(points)
        self.points = points[order]
        self.log_masses = log_masses[order]
        self.copies = copies
        self.spec = spec
        self.discarded_mass_bound = float(discarded_mass_bound)
        total = logsumexp(self.log_masses)
        if abs(math.expm1(total)) > _NORMALIZATION_TOL:
            raise ValueError(f"masses sum to {math.exp(total)!r}, not 1")
        self._index = {tuple(int(v) for v in p): i for i, p in enumerate(self.points)}
        if len(self._index) != len(self.points):
            raise ValueError("duplicate lattice points")

    @classmethod
    def from_masses(cls, points, masses, **kwargs):
        masses = np.asarray(masses, dtype=float)
        if np.any(masses <= 0):
            raise ValueError("all masses must be positive")
        return cls(points, np.log(masses), **kwargs)

    @property
    def r(self) -> int:
        return self.points.shape[1]

    @property
    def support_size(self) -> int:
        return len(self.points)

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_masses)

    def log_mass(self, s) -> float:
        i = self._index.get(tuple(int(v) for v in np.atleast_1d(s)))
        return float("-inf") if i is None else float(self.log_masses[i])

    def mass(self, s) -> float:
        return math.exp(self.log_mass(s))

    def masses_on(self, points) -> np.ndarray:
        """Masses at the given points, zero where the point is off support."""
        points = np.atleast_2d(np.asarray(points, dtype=np.int64))
        out = np.zeros(len(points))
        for i, p in enumerate(points):
            j = self._index.get(tuple(int(v) for v in p))
            if j is not None:
                out[i] = math.exp(self.log_masses[j])
        return out

    def mean(self) -> np.ndarray:
        return self.masses @ self.points.astype(float)

    def cov(self) -> np.ndarray:
        pts = self.points.astype(float)
        w = self.masses
        mu = w @ pts
        centered = pts - mu
        return (centered * w[:, None]).T @ centered

    def min_mass(self) -> float:
        return float(np.exp(self.log_masses.min()))

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in p): math.exp(l) for p, l in zip(self.points, self.log_masses)}

    def __len__(self) -> int:
        return len(self.points)


def _log_multinomial(spec: ClockSpec, n: int, parts: np.ndarray) -> np.ndarray:
    occ0 = n - parts.sum(axis=1)
    logp = np.log(spec.probs_array)
    out = gammaln(n + 1) - gammaln(occ0 + 1) + occ0 * logp[0]
    if parts.shape[1]:
        out = out - gammaln(parts + 1).sum(axis=1) + parts @ logp[1:]
    return out


def exact_distribution(spec: ClockSpec, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> EnergyDistribution:
    """Multinomial mass aggregated over lattice points for n clocks."""
    parts = enumerate_partitions(n, spec.d, cap=cap)
    logm = _log_multinomial(spec, n, parts)
    svecs = smith_vectors(spec.smith(), parts)
    uniq, logp = group_logsumexp(svecs, logm)
    return EnergyDistribution(uniq, logp, copies=n, spec=spec)


def lattice_points(spec: ClockSpec, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Sorted distinct lattice points reachable by n clocks."""
    parts = enumerate_partitions(n, spec.d, cap=cap)
    svecs = smith_vectors(spec.smith(), parts)
    if svecs.shape[1] == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.unique(svecs, axis=0)


# ---------------------------------------------------------------------------
# window-restricted exact masses via fiber enumeration

def _fiber_partitions(spec: ClockSpec, n: int, s: np.ndarray) -> np.ndarray:
    """All occupation vectors of n clocks mapping to the lattice point s."""
    sf = spec.smith()
    c, r = sf.cols, sf.r
    Sinv = sf.S_inverse
    a = Sinv[:, :r] @ s.astype(np.int64) if r else np.zeros(c, dtype=np.int64)
    B = Sinv[:, r:]
    f = c - r
    if f == 0:
        part = a
        if np.all(part >= 0) and part.sum() <= n:
            return part.reshape(1, c)
        return np.zeros((0, c), dtype=np.int64)
    if f == 1:
        b = B[:, 0]
        lo, hi = None, None
        for ai, bi in zip(a.tolist(), b.tolist()):
            if bi == 0:
                if ai < 0:
                    return np.zeros((0, c), dtype=np.int64)
            elif bi > 0:
                bound = math.ceil(Fraction(-ai, bi))
                lo = bound if lo is None else max(lo, bound)
            else:
                bound = math.floor(Fraction(-ai, bi))
                hi = bound if hi is None else min(hi, bound)
        sa, sb = int(a.sum()), int(b.sum())
        if sb == 0:
            if sa > n:
                return np.zeros((0, c), dtype=np.int64)
        elif sb > 0:
            bound = math.floor(Fraction(n - sa, sb))
            hi = bound if hi is None else min(hi, bound)
        else:
            bound = math.ceil(Fraction(n - sa, sb))
            lo = bound if lo is None else max(lo, bound)
        if lo is None or hi is None or lo > hi:
            return np.zeros((0, c), dtype=np.int64)
        w = np.arange(lo, hi + 1, dtype=np.int64)
        return a[None, :] + np.outer(w, b)
    return _fiber_partitions_lp(n, a, B)


def _fiber_partitions_lp(n: int, a: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Free-coordinate enumeration through linear-programming bounding boxes."""
    from scipy.optimize import linprog

    c, f = B.shape
    A_ub = np.vstack([-B.astype(float), B.sum(axis=0, dtype=float)])
    b_ub = np.concatenate([a.astype(float), [float(n - a.sum())]])
    ranges = []
    for j in range(f):
        cost = np.zeros(f)
        cost[j] = 1.0
        lo = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * f, method="highs")
        hi = linprog(-cost, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * f, method="highs")
        if not (lo.success and hi.success):
            return np.zeros((0, c), dtype=np.int64)
        ranges.append(range(math.floor(lo.fun) - 1, math.ceil(-hi.fun) + 2))
    box = np.array(list(itertools.product(*ranges)), dtype=np.int64)
    if len(box) == 0:
        return np.zeros((0, c), dtype=np.int64)
    parts = a[None, :] + box @ B.T
    ok = np.all(parts >= 0, axis=1) & (parts.sum(axis=1) <= n)
    return parts[ok]


def exact_masses_in_box(spec: ClockSpec, n: int, lo, hi, cap: int = DEFAULT_ENUMERATION_CAP):
    """Exact masses at every occupied lattice point of an axis-aligned box.

    Returns ``(points, log_masses)``; points of the box with an empty fiber
    (not reachable by any occupation vector) are omitted.  Not a normalized
    distribution, just the local masses.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    sites = math.prod(int(h - l + 1) for l, h in zip(lo, hi))
    if sites > 1_000_000:
        raise CapExceededError(f"window holds {sites} candidate sites")
    grid = itertools.product(*(range(int(l), int(h) + 1) for l, h in zip(lo, hi)))
    kept_points, blocks, starts = [], [], []
    offset = 0
    for s in grid:
        fiber = _fiber_partitions(spec, n, np.array(s, dtype=np.int64))
        if len(fiber) == 0:
            continue
        kept_points.append(s)
        blocks.append(fiber)
        starts.append(offset)
        offset += len(fiber)
        if offset > cap:
            raise CapExceededError(f"window fibers exceed the cap {cap}")
    if not kept_points:
        return np.zeros((0, len(lo)), dtype=np.int64), np.zeros(0)
    parts = np.vstack(blocks)
    logm = _log_multinomial(spec, n, parts)
    grouped = segment_logsumexp(logm, np.array(starts, dtype=np.int64))
    return np.array(kept_points, dtype=np.int64), grouped


# ---------------------------------------------------------------------------
# limiting normal density on the lattice

@dataclass(frozen=True)
class GaussianApprox:
    """Lattice-sampled multivariate normal matching the exact moments.

    ``mean``/``cov`` are in unit-spacing coordinates where the cell volume is
    one; ``unit_cell`` keeps the volume of the original K-coordinate cell so
    the equivalent (unit_cell / sqrt(det tilde_cov)) reading is available.
    """

    mean: np.ndarray
    cov: np.ndarray
    unit_cell: int
    _chol: np.ndarray
    _log_norm: float

    def log_mass(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.mean
        y = np.linalg.solve(self._chol, pts.T)
        return self._log_norm - 0.5 * np.sum(y * y, axis=0)

    def mass(self, points) -> np.ndarray:
        return np.exp(self.log_mass(points))

    def mass_at(self, s) -> float:
        return float(self.mass(np.atleast_2d(np.asarray(s))))


def gaussian_approx(spec: ClockSpec, n: int) -> GaussianApprox:
    mom = moments(spec, n)
    if spec.r == 0:
        raise ValueError("degenerate spectrum has no lattice directions")
    try:
        chol = np.linalg.cholesky(mom.cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular covariance") from exc
    log_norm = -0.5 * spec.r * math.log(2 * math.pi) - float(np.sum(np.log(np.diag(chol))))
    return GaussianApprox(mean=mom.mean, cov=mom.cov, unit_cell=mom.unit_cell,
                          _chol=chol, _log_norm=log_norm)


def gaussian_mass(spec: ClockSpec, n: int, s) -> float:
    """Normal-limit mass at one lattice point of the n-clock distribution."""
    return gaussian_approx(spec, n).mass_at(s)


@dataclass(frozen=True)
class ApproximationReport:
    sup_ratio_error: float
    total_variation: float
    window_lo: tuple[int, ...]
    window_hi: tuple[int, ...]
    site_count: int


def approximation_error(
    spec: ClockSpec,
    n: int,
    n_std: float = 5.0,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ApproximationReport:
    """Exact-vs-normal discrepancy on the typical window (mean +- n_std sigma).

    Reports the supremum of |exact/normal - 1| and the summed absolute
    difference over the window's occupied sites.
    """
    if n <= 0:
        raise ValueError("need n >= 1 for a nonempty window")
    ga = gaussian_approx(spec, n)
    sd = np.sqrt(np.diag(ga.cov))
    lo = np.ceil(ga.mean - n_std * sd).astype(np.int64)
    hi = np.floor(ga.mean + n_std * sd).astype(np.int64)
    if partition_count(n, spec.d) <= _FULL_ENUMERATION_LIMIT:
        dist = exact_distribution(spec, n, cap=cap)
        inside = np.all((dist.points >= lo) & (dist.points <= hi), axis=1)
        pts = dist.points[inside]
        logm = dist.log_masses[inside]
    else:
        pts, logm = exact_masses_in_box(spec, n, lo, hi, cap=cap)
    if len(pts) == 0:
        raise ValueError("typical window contains no lattice sites")
    exact = np.exp(logm)
    approx = ga.mass(pts)
    return ApproximationReport(
        sup_ratio_error=float(np.max(np.abs(exact / approx - 1.0))),
        total_variation=float(np.sum(np.abs(exact - approx))),
        window_lo=tuple(int(v) for v in lo),
        window_hi=tuple(int(v) for v in hi),
        site_count=len(pts),
    )


def guess_distribution(
    spec: ClockSpec,
    m: int,
    width_exponent: float,
    center=None,
    rel_cutoff: float = 1e-15,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> EnergyDistribution:
    """Discrete normal over the m-clock lattice with width m**((1-eta)/2).

    ``width_exponent`` is eta in (0, 1): larger eta gives a narrower guess.
    The same family realizes the inverse-variance regularizer policy
    zeta = m**delta through eta = delta (variance m**(1-eta) per axis).
    Sites below ``rel_cutoff`` of the peak weight are dropped and the dropped
    fraction is recorded as ``discarded_mass_bound``.
    """
    if not 0.0 < width_exponent < 1.0:
        raise ValueError(f"width exponent must lie in (0, 1), got {width_exponent}")
    pts = lattice_points(spec, m, cap=cap)
    if pts.shape[1] == 0:
        return EnergyDistribution(pts, np.array([0.0]), copies=m, spec=spec)
    if center is None:
        center = np.rint(moments(spec, m).mean)
    center = np.asarray(center, dtype=float).reshape(-1)
    variance = float(m) ** (1.0 - width_exponent)
    logw = -np.sum((pts.astype(float) - center) ** 2, axis=1) / (2.0 * variance)
    keep = logw >= logw.max() + math.log(rel_cutoff)
    total = logsumexp(logw)
    kept_total = logsumexp(logw[keep])
    discarded = -math.expm1(kept_total - total)
    return EnergyDistribution(
        pts[keep],
        logw[keep] - kept_total,
        copies=m,
        spec=spec,
        discarded_mass_bound=max(discarded, 0.0),
    )
