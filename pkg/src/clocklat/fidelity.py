"""Replication fidelities for postselected clock states.

Three routes to the worst-case global fidelity of turning n clocks into m:
the exact estimate-and-reprepare value for a given guess distribution, the
exact optimum over diagonal-block transfer channels for a fixed filter, and
the closed-form ceiling / large-m limit.  All of them live on the integer
energy lattice in unit-spacing coordinates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._util import group_sum
from .errors import ConvergenceError
from .lattice import DEFAULT_ENUMERATION_CAP, ClockSpec, moments
from .distributions import EnergyDistribution, exact_distribution, guess_distribution

_PI_TOL = 1e-12


class Filter:
    """Postselection coefficients pi_s in [0, 1] indexed by lattice site.

    Sites absent from the mapping are fully filtered out (pi = 0).  The
    success probability is the pi-weighted mass of the input distribution.
    """

    def __init__(self, pi):
        items = {}
        for s, v in dict(pi).items():
            key = tuple(int(x) for x in np.atleast_1d(s))
            v = float(v)
            if v < -_PI_TOL or v > 1.0 + _PI_TOL:
                raise ValueError(f"filter coefficient {v!r} at {key} outside [0, 1]")
            items[key] = min(max(v, 0.0), 1.0)
        self._pi = items

    @classmethod
    def trivial(cls, dist: EnergyDistribution) -> "Filter":
        return cls({tuple(int(v) for v in p): 1.0 for p in dist.points})

    @classmethod
    def indicator(cls, sites) -> "Filter":
        return cls({tuple(int(v) for v in np.atleast_1d(s)): 1.0 for s in sites})

    def value(self, s) -> float:
        return self._pi.get(tuple(int(x) for x in np.atleast_1d(s)), 0.0)

    def values_on(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.int64))
        return np.array([self._pi.get(tuple(int(v) for v in p), 0.0) for p in points])

    def success_probability(self, dist: EnergyDistribution) -> float:
        return float(self.values_on(dist.points) @ dist.masses)

    def rescaled(self, c: float) -> "Filter":
        if not 0.0 < c <= 1.0:
            raise ValueError("rescale factor must lie in (0, 1]")
        return Filter({s: c * v for s, v in self._pi.items()})

    def items(self):
        return self._pi.items()

    def __len__(self):
        return len(self._pi)


@dataclass(frozen=True)
class FidelityResult:
    """A fidelity value with its success probability and provenance tag.

    ``truncation`` bounds the error from declared tail truncations; a bound
    above one is reported as ``vacuous`` rather than clipped.
    """

    value: float
    succ: float
    method: str
    truncation: float = 0.0
    vacuous: bool = False


@dataclass
class ClonerSolution:
    """Optimal diagonal-block channel weights for a fixed filter.

    ``q`` maps (energy shift, input site) to the nonnegative weight of the
    rank-one block; weights sum to one over shifts for every input site.
    """

    q: dict
    fidelity: float
    succ: float
    kkt_residual: float
    iterations: int
    method: str = "exact-CL"


def _filter_weights(dist_n: EnergyDistribution, filt: Filter):
    pi = filt.values_on(dist_n.points)
    p = dist_n.masses
    succ = float(pi @ p)
    if succ <= 0.0:
        raise ValueError("filter passes no probability mass")
    if succ > 1.0 + 1e-9:
        raise ValueError(f"success probability {succ!r} above one")
    xi = np.sqrt(p * pi / succ)
    keep = xi > 0
    return dist_n.points[keep], xi[keep], min(succ, 1.0)


def pm_fidelity_exact(
    spec: ClockSpec,
    n: int,
    m: int,
    filt: Filter,
    guess: EnergyDistribution,
    dist_n: EnergyDistribution | None = None,
    dist_m: EnergyDistribution | None = None,
    tail_sigmas: float = 8.0,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> FidelityResult:
    """Exact estimate-and-reprepare fidelity for a filter and guess state.

    Sums over all energy shifts between the n-clock and m-clock lattices the
    squared overlap sum sqrt(p_n * p_m * guess * pi / P_succ); output sites
    beyond ``tail_sigmas`` standard deviations of the m-clock mean are
    dropped and the dropped mass is reported as a truncation bound.
    """
    dist_n = dist_n if dist_n is not None else exact_distribution(spec, n, cap=cap)
    dist_m = dist_m if dist_m is not None else exact_distribution(spec, m, cap=cap)
    s_pts, xi, succ = _filter_weights(dist_n, filt)
    sum_xi_sq = float(np.sum(xi)) ** 2

    t_pts = dist_m.points
    p_m = dist_m.masses
    truncated = 0.0
    if spec.r:
        mom = moments(spec, m)
        sd = np.sqrt(np.diag(mom.cov))
        inside = np.all(np.abs(t_pts.astype(float) - mom.mean) <= tail_sigmas * sd, axis=1)
        truncated = float(np.sum(p_m[~inside]))
        t_pts, p_m = t_pts[inside], p_m[inside]
    g = np.sqrt(p_m * guess.masses_on(t_pts))
    live = g > 0
    t_pts, g = t_pts[live], g[live]
    if len(t_pts) == 0 or len(s_pts) == 0:
        raise ValueError("empty effective support for the fidelity sum")

    diffs = (t_pts[None, :, :] - s_pts[:, None, :]).reshape(-1, spec.r)
    contrib = (xi[:, None] * g[None, :]).reshape(-1)
    _, sums = group_sum(diffs, contrib)
    value = float(np.sum(sums**2))
    bound = sum_xi_sq * (truncated + guess.discarded_mass_bound)
    return FidelityResult(value=value, succ=succ, method="exact-PM", truncation=bound)


def cloning_bound(
    spec: ClockSpec,
    n: int,
    m: int,
    filt: Filter,
    dist_n: EnergyDistribution | None = None,
    dist_m: EnergyDistribution | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> FidelityResult:
    """Fixed-filter fidelity ceiling: max_t p_m(t) times (sum_s xi_s)^2.

    The peak site is the lexicographically first maximizer (value-identical
    under ties).  Values above one are reported with the vacuous flag.
    """
    dist_n = dist_n if dist_n is not None else exact_distribution(spec, n, cap=cap)
    dist_m = dist_m if dist_m is not None else exact_distribution(spec, m, cap=cap)
    _, xi, succ = _filter_weights(dist_n, filt)
    peak = float(np.max(dist_m.masses))
    value = peak * float(np.sum(xi)) ** 2
    return FidelityResult(value=value, succ=succ, method="bound", vacuous=value > 1.0 + 1e-12)


def asymptotic_fidelity(
    spec: ClockSpec,
    n: int,
    m: int,
    filt: Filter,
    dist_n: EnergyDistribution | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> FidelityResult:
    """Large-m fidelity: normal-peak prefactor times (sum_s xi_s)^2.

    The prefactor 1/sqrt((2 pi)^r det cov(m)) shrinks as m**(-r/2), so the
    number of independent energy units sets the decay law.
    """
    if m < 10 * n * n:
        warnings.warn(f"m={m} is small next to n={n}; large-m value may be loose", stacklevel=2)
    dist_n = dist_n if dist_n is not None else exact_distribution(spec, n, cap=cap)
    _, xi, succ = _filter_weights(dist_n, filt)
    cov = moments(spec, m).cov
    prefactor = 1.0 / math.sqrt((2 * math.pi) ** spec.r * np.linalg.det(cov))
    return FidelityResult(value=prefactor * float(np.sum(xi)) ** 2, succ=succ, method="asymptotic")


def cloning_fidelity_exact(
    spec: ClockSpec,
    n: int,
    m: int,
    filt: Filter,
    dist_n: EnergyDistribution | None = None,
    dist_m: EnergyDistribution | None = None,
    init_guesses: tuple[EnergyDistribution, ...] = (),
    restarts: int = 8,
    seed: int = 7,
    tol: float = 1e-8,
    max_iter: int = 50_000,
    pair_cap: int = 5_000_000,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ClonerSolution:
    """Best fidelity over rank-one diagonal-block channels for a fixed filter.

    Maximizes sum over shifts of (sum_s sqrt(W * q))^2 where the weights q
    form a probability vector over shifts at each input site (exactly the
    trace-preservation constraint).  Solved by normalized multiplicative
    power updates, which ascend monotonically; starts include the uniform
    point, estimate-and-reprepare feasible points (so the result dominates
    them), and seeded random draws.  Raises ConvergenceError with the best
    iterate if no start reaches the tolerance.
    """
    dist_n = dist_n if dist_n is not None else exact_distribution(spec, n, cap=cap)
    dist_m = dist_m if dist_m is not None else exact_distribution(spec, m, cap=cap)
    s_pts, xi, succ = _filter_weights(dist_n, filt)
    t_pts, p_m = dist_m.points, dist_m.masses
    ns, nt = len(s_pts), len(t_pts)
    if ns * nt > pair_cap:
        raise ConvergenceError(f"shift table would hold {ns * nt} pairs, above {pair_cap}")

    diffs = (t_pts[None, :, :] - s_pts[:, None, :]).reshape(-1, spec.r)
    if spec.r:
        shifts, inv = np.unique(diffs, axis=0, return_inverse=True)
        inv = inv.ravel()
    else:
        shifts = np.zeros((1, 0), dtype=np.int64)
        inv = np.zeros(ns * nt, dtype=np.int64)
    ne = len(shifts)
    s_idx = np.repeat(np.arange(ns), nt)
    W = np.zeros((ne, ns))
    W[inv, s_idx] = (xi[:, None] ** 2 * p_m[None, :]).reshape(-1)
    sqrtW = np.sqrt(W)
    valid = W > 0

    def simplex_from_masses(masses_by_t: np.ndarray) -> np.ndarray:
        q = np.zeros((ne, ns))
        q[inv, s_idx] = np.broadcast_to(masses_by_t[None, :], (ns, nt)).reshape(-1)
        q[~valid] = 0.0
        return q / q.sum(axis=0, keepdims=True)

    starts = [simplex_from_masses(p_m)]
    for g in init_guesses:
        starts.append(simplex_from_masses(g.masses_on(t_pts)))
    uniform = valid.astype(float)
    starts.append(uniform / uniform.sum(axis=0, keepdims=True))
    rng = np.random.default_rng(seed)
    for _ in range(max(restarts - len(starts), 0)):
        q = np.where(valid, rng.random((ne, ns)), 0.0)
        starts.append(q / q.sum(axis=0, keepdims=True))

    best = None
    for q0 in starts:
        u = np.sqrt(q0)
        fid = res = 0.0
        iters = 0
        for iters in range(1, max_iter + 1):
            A = np.sum(sqrtW * u, axis=1)
            Mu = sqrtW * A[:, None]
            lam = np.sum(u * Mu, axis=0)
            res = float(np.max(np.abs(Mu - u * lam[None, :]))) / max(float(lam.max()), 1e-300)
            fid = float(np.sum(A * A))
            if res < tol:
                break
            norms = np.sqrt(np.sum(Mu * Mu, axis=0))
            u = Mu / norms[None, :]
        cand = (fid, res < tol, u, res, iters)
        if best is None or (cand[1], cand[0]) > (best[1], best[0]):
            best = cand
    fid, converged, u, res, iters = best
    q = u * u
    q = q / q.sum(axis=0, keepdims=True)
    qdict = {}
    for e in range(ne):
        for s in range(ns):
            if valid[e, s] and q[e, s] > 0:
                qdict[(tuple(int(v) for v in shifts[e]), tuple(int(v) for v in s_pts[s]))] = float(q[e, s])
    sol = ClonerSolution(q=qdict, fidelity=fid, succ=succ, kkt_residual=res, iterations=iters)
    if not converged:
        raise ConvergenceError(
            f"block optimizer stalled at residual {res:.2e} after {iters} iterations",
            best=sol,
            residual=res,
        )
    return sol


@dataclass(frozen=True)
class SandwichRow:
    m: int
    pm: FidelityResult
    cloner: ClonerSolution | None
    bound: FidelityResult
    asymptotic: FidelityResult
    gap_pm_asymptotic: float = field(init=False)
    gap_pm_bound: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "gap_pm_asymptotic", abs(self.pm.value - self.asymptotic.value) / self.asymptotic.value
        )
        object.__setattr__(
            self, "gap_pm_bound", abs(self.bound.value - self.pm.value) / self.bound.value
        )


def sandwich_experiment(
    spec: ClockSpec,
    n: int,
    m_list,
    filt: Filter,
    width_exponent: float = 0.5,
    cloner_pair_cap: int = 1500,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> list[SandwichRow]:
    """Convergence table pinching the exact value between its two limits.

    For each m (ascending): the exact estimate-and-reprepare fidelity with the
    width-policy guess, the exact block-channel optimum when the shift table
    stays small, the fixed-filter ceiling, and the large-m value, plus the
    relative gaps between them.
    """
    m_list = list(m_list)
    if m_list != sorted(m_list):
        raise ValueError("m values must be ascending")
    dist_n = exact_distribution(spec, n, cap=cap)
    rows = []
    for m in m_list:
        dist_m = exact_distribution(spec, m, cap=cap)
        guess = guess_distribution(spec, m, width_exponent, cap=cap)
        pm = pm_fidelity_exact(spec, n, m, filt, guess, dist_n=dist_n, dist_m=dist_m, cap=cap)
        cl = None
        if dist_n.support_size * dist_m.support_size <= cloner_pair_cap:
            cl = cloning_fidelity_exact(
                spec, n, m, filt, dist_n=dist_n, dist_m=dist_m, init_guesses=(guess,), cap=cap
            )
        bound = cloning_bound(spec, n, m, filt, dist_n=dist_n, dist_m=dist_m, cap=cap)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            asy = asymptotic_fidelity(spec, n, m, filt, dist_n=dist_n, cap=cap)
        rows.append(SandwichRow(m=m, pm=pm, cloner=cl, bound=bound, asymptotic=asy))
    return rows


def pm_fidelity_via_measurement(
    spec: ClockSpec,
    n: int,
    m: int,
    filt: Filter,
    guess: EnergyDistribution,
    sigma: float = 10.0,
    t_grid=None,
    measure: str = "gaussian",
    dist_n: EnergyDistribution | None = None,
    dist_m: EnergyDistribution | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
    return_profile: bool = False,
):
    """Worst-case fidelity through an explicit covariant estimation family.

    Only defined for one energy unit (periodic evolution, period 2*pi in
    unit-spacing coordinates).  The estimate density is either uniform over
    one period (an exact resolution of the identity) or a normal of width
    ``sigma`` (approximate, with an exp(-sigma^2) normalization defect); the
    quadrature evaluates the time integral directly, independently of the
    closed-form route, and approaches it as sigma grows.
    """
    if spec.r != 1:
        raise ValueError("measurement cross-check is defined for a single energy unit")
    if measure not in ("gaussian", "periodic"):
        raise ValueError(f"unknown measure {measure!r}")
    if measure == "gaussian" and sigma <= 0:
        raise ValueError("sigma must be positive")
    dist_n = dist_n if dist_n is not None else exact_distribution(spec, n, cap=cap)
    dist_m = dist_m if dist_m is not None else exact_distribution(spec, m, cap=cap)
    s_pts, xi, succ = _filter_weights(dist_n, filt)
    g = np.sqrt(dist_m.masses * guess.masses_on(dist_m.points))
    live = g > 0
    t_pts, g = dist_m.points[live], g[live]
    diffs = (t_pts[None, :, :] - s_pts[:, None, :]).reshape(-1, 1)
    shifts, f = group_sum(diffs, (xi[:, None] * g[None, :]).reshape(-1))
    freqs = shifts[:, 0].astype(float)

    def amplitude_sq(u: np.ndarray) -> np.ndarray:
        phases = np.exp(1j * np.outer(freqs, u))
        amp = f @ phases
        return np.abs(amp) ** 2

    if t_grid is None:
        t_grid = np.linspace(0.0, 2 * math.pi, 64, endpoint=False)
    t_grid = np.asarray(t_grid, dtype=float)

    band = float(freqs.max() - freqs.min()) if len(freqs) else 0.0
    if measure == "periodic":
        # trapezoid on the full period integrates the trig polynomial exactly
        npts = int(2 * band) + 3
        that = np.linspace(0.0, 2 * math.pi, npts, endpoint=False)
        values = np.array([float(np.mean(amplitude_sq(t - that))) for t in t_grid])
    else:
        half = 8.0 * sigma
        step = min(2 * math.pi / (8.0 * band + 8.0), sigma / 8.0)
        npts = min(int(2 * half / step) + 1, 400_001)
        that = np.linspace(-half, half, npts)
        w = np.exp(-that**2 / (2 * sigma**2)) / math.sqrt(2 * math.pi * sigma**2)
        dt = that[1] - that[0]
        values = np.array([float(np.sum(w * amplitude_sq(t - that)) * dt) for t in t_grid])

    result = FidelityResult(value=float(values.min()), succ=succ, method="measurement",
                            truncation=guess.discarded_mass_bound)
    if return_profile:
        return result, values
    return result
