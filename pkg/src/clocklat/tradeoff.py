"""Optimal postselection filters and the fidelity/success trade-off curve.

The exact engine solves, for any target success probability, the capped
maximization of sum(xi) subject to sum(xi^2) = 1 and xi_s <= sqrt(p_s / P):
its stationary points are a constant plateau away from a coincidence set
where the cap binds, so a sort-and-sweep over candidate boundaries yields the
exact optimum with a checkable certificate.  The limiting engine expresses
the same curve through upper incomplete gamma functions of an ellipsoid
radius parameter, with closed forms at both ends of the curve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .lattice import DEFAULT_ENUMERATION_CAP, ClockSpec, moments
from .distributions import EnergyDistribution, exact_distribution
from .fidelity import Filter

_ALPHA_MAX = 20.0  # success probability is below double-precision floor past this


@dataclass(frozen=True)
class TradeoffPoint:
    """A (success probability, fidelity) pair with its provenance.

    ``alpha`` is the ellipsoid radius parameter when produced by the
    parametric engine; ``regime`` flags the flat low-success branch of the
    exact engine (target below the smallest site mass).
    """

    succ: float
    fidelity: float
    method: str
    alpha: float | None = None
    regime: str | None = None


@dataclass(frozen=True)
class WaterfillSolution:
    """Exact optimizer of the capped maximization at one success target.

    ``xi`` holds the amplitudes per site, equal to the plateau ``zeta`` off
    the coincidence set and to sqrt(p_s / succ) on it; ``filter`` is the
    induced postselection with pi_s = xi_s^2 * succ / p_s.
    """

    points: np.ndarray
    xi: np.ndarray
    zeta: float
    coincidence: frozenset
    filter: Filter
    succ: float

    @property
    def sum_xi(self) -> float:
        return float(np.sum(self.xi))

    def xi_dict(self) -> dict:
        return {tuple(int(v) for v in p): float(x) for p, x in zip(self.points, self.xi)}


def waterfill(dist: EnergyDistribution, target_succ: float) -> WaterfillSolution:
    """Exact capped water-filling at the given success probability.

    Sites are sorted by mass (ties broken lexicographically) and the
    coincidence-set boundary swept from empty upward; the first split whose
    plateau satisfies complementary slackness is the optimum.  Below the
    smallest site mass the caps never bind and the solution is flat,
    xi = 1/sqrt(number of sites).
    """
    if not 0.0 < target_succ <= 1.0:
        raise ValueError(f"target success probability must lie in (0, 1], got {target_succ}")
    p = dist.masses
    n_sites = len(p)
    caps = np.sqrt(p / target_succ)
    order = np.lexsort((np.arange(n_sites), p))
    c = caps[order]
    csq = c * c

    xi_sorted = None
    zeta = None
    coincidence_count = 0
    if target_succ >= 1.0 - 1e-14:
        # deterministic filter: every cap binds and pi is identically one
        xi_sorted = c.copy()
        zeta = float(c.max())
        coincidence_count = n_sites
    else:
        prefix = np.concatenate([[0.0], np.cumsum(csq)])
        for k in range(n_sites):
            rem = 1.0 - prefix[k]
            if rem <= 0:
                break
            z = math.sqrt(rem / (n_sites - k))
            lo_ok = k == 0 or c[k - 1] <= z * (1 + 1e-12)
            hi_ok = z <= c[k] * (1 + 1e-12)
            if lo_ok and hi_ok:
                xi_sorted = np.concatenate([c[:k], np.full(n_sites - k, z)])
                zeta = z
                coincidence_count = k
                break
        if xi_sorted is None:
            raise RuntimeError("no feasible coincidence-set boundary found")

    xi = np.empty(n_sites)
    xi[order] = xi_sorted
    coincidence = frozenset(
        tuple(int(v) for v in dist.points[order[i]]) for i in range(coincidence_count)
    )
    pi = np.minimum(xi * xi * target_succ / p, 1.0)
    filt = Filter({tuple(int(v) for v in pt): float(v) for pt, v in zip(dist.points, pi)})
    return WaterfillSolution(
        points=dist.points.copy(),
        xi=xi,
        zeta=float(zeta),
        coincidence=coincidence,
        filter=filt,
        succ=target_succ,
    )


def kkt_certificate(sol: WaterfillSolution, dist: EnergyDistribution) -> dict:
    """Residuals of the optimality conditions for a water-filling solution.

    Returns primal (normalization and cap) violations, dual feasibility of
    the reconstructed multipliers sigma_s = 1 - xi_s/zeta, and the
    complementary-slackness residual; all should sit at rounding level.
    """
    caps = np.sqrt(dist.masses / sol.succ)
    sigma = 1.0 - sol.xi / sol.zeta
    on_c = np.array([tuple(int(v) for v in p) in sol.coincidence for p in sol.points])
    sigma = np.where(on_c, sigma, 0.0)
    return {
        "primal_normalization": abs(float(np.sum(sol.xi**2)) - 1.0),
        "primal_cap": abs(float(min(np.min(caps - sol.xi), 0.0))),
        "dual_feasibility": abs(float(min(np.min(sigma), 0.0))),
        "complementary_slackness": float(np.max(np.abs(sigma * (sol.xi - caps)))),
    }


def random_feasible_xi(
    dist: EnergyDistribution, target_succ: float, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Random feasible amplitude vectors for dominance checks.

    Draws nonnegative directions and scales each under the caps until the
    normalization constraint holds (bisection on the scale factor).
    """
    caps = np.sqrt(dist.masses / target_succ)
    u = np.abs(rng.standard_normal((count, len(caps)))) + 1e-12
    lo = np.zeros(count)
    hi = np.ones(count)
    for _ in range(200):
        total = np.sum(np.minimum(hi[:, None] * u, caps[None, :]) ** 2, axis=1)
        grow = total < 1.0
        if not np.any(grow):
            break
        hi[grow] *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        total = np.sum(np.minimum(mid[:, None] * u, caps[None, :]) ** 2, axis=1)
        lo = np.where(total < 1.0, mid, lo)
        hi = np.where(total < 1.0, hi, mid)
    return np.minimum(hi[:, None] * u, caps[None, :])


def optimal_fidelity_exact(
    spec: ClockSpec,
    n: int,
    m: int,
    target_succ: float,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> TradeoffPoint:
    """Exact optimal filter on the true n-clock masses, large-m prefactor.

    Combines the water-filling optimum of sum(xi) with the normal-peak
    prefactor 1/sqrt((2 pi)^r det cov(m)).
    """
    if m < 10 * n * n:
        warnings.warn(f"m={m} is small next to n={n}; large-m prefactor may be loose", stacklevel=2)
    dist = exact_distribution(spec, n, cap=cap)
    sol = waterfill(dist, target_succ)
    cov = moments(spec, m).cov
    prefactor = 1.0 / math.sqrt((2 * math.pi) ** spec.r * np.linalg.det(cov))
    regime = "flat-low-success" if target_succ < dist.min_mass() else "waterfilled"
    return TradeoffPoint(
        succ=target_succ,
        fidelity=prefactor * sol.sum_xi**2,
        method="exact-KKT",
        regime=regime,
    )


def low_succ_fidelity(spec: ClockSpec, n: int, m: int, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Vanishing-success fidelity ceiling: lattice size times the peak prefactor."""
    from .lattice import lattice_size

    size = lattice_size(spec, n, cap=cap)
    cov = moments(spec, m).cov
    return size / math.sqrt((2 * math.pi) ** spec.r * np.linalg.det(cov))


# ---------------------------------------------------------------------------
# upper incomplete gamma function

def upper_incomplete_gamma(a: float, x: float) -> float:
    """Gamma(a, x) = integral_x^inf t^(a-1) e^(-t) dt for a > 0, x >= 0.

    Series around the origin for x < a + 1, modified Lentz continued fraction
    otherwise; relative accuracy around 1e-14.
    """
    if a <= 0:
        raise ValueError(f"need a > 0, got {a}")
    if x < 0:
        raise ValueError(f"need x >= 0, got {x}")
    if x == 0.0:
        return math.gamma(a)
    if x < a + 1.0:
        # lower-tail series gamma(a,x) = x^a e^-x sum_k x^k / (a (a+1) ... (a+k))
        term = 1.0 / a
        total = term
        k = a
        for _ in range(10_000):
            k += 1.0
            term *= x / k
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        else:
            raise ConvergenceError("lower-tail series did not converge")
        return math.gamma(a) - math.exp(a * math.log(x) - x) * total
    # upper-tail continued fraction (modified Lentz)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return math.exp(a * math.log(x) - x) * h
    raise ConvergenceError("continued fraction did not converge")


# ---------------------------------------------------------------------------
# parametric curve in the ellipsoid radius

def _succ_of_alpha(r: int, alpha: float) -> float:
    a = r / 2.0
    x = alpha * alpha / 2.0
    val = upper_incomplete_gamma(a, x) + alpha**r * math.exp(-x) / (2.0 ** (a - 1.0) * r)
    return min(val / math.gamma(a), 1.0)


def _fidelity_of_alpha(r: int, n: int, m: int, alpha: float) -> float:
    a = r / 2.0
    x2 = alpha * alpha / 2.0
    x4 = alpha * alpha / 4.0
    num = 2.0 ** (r - 1.0) * r * upper_incomplete_gamma(a, x4) + alpha**r * math.exp(-x4)
    den = 2.0 ** (a - 1.0) * r * upper_incomplete_gamma(a, x2) + alpha**r * math.exp(-x2)
    return (n / (2.0 * m)) ** a / math.gamma(a + 1.0) * num * num / den


def tradeoff_parametric(r: int, n: int, m: int, alpha: float) -> TradeoffPoint:
    """Point of the limiting trade-off curve at ellipsoid radius alpha.

    alpha = 0 is the deterministic end, success 1 and fidelity (4n/m)^(r/2);
    success decays to zero as alpha grows.
    """
    if r < 1:
        raise ValueError("need at least one energy unit")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0.0:
        return TradeoffPoint(succ=1.0, fidelity=(4.0 * n / m) ** (r / 2.0),
                             method="parametric-alpha", alpha=0.0)
    return TradeoffPoint(
        succ=_succ_of_alpha(r, alpha),
        fidelity=_fidelity_of_alpha(r, n, m, alpha),
        method="parametric-alpha",
        alpha=alpha,
    )


def tradeoff_at_succ(
    r: int, n: int, m: int, target_succ: float, tol: float = 1e-10
) -> TradeoffPoint:
    """Invert the parametric curve at a target success probability.

    The success probability decreases strictly in alpha, so plain bisection
    on [0, 20] finds the radius; the inversion has no closed form.
    """
    if not 0.0 < target_succ <= 1.0:
        raise ValueError(f"target success probability must lie in (0, 1], got {target_succ}")
    if target_succ == 1.0:
        return tradeoff_parametric(r, n, m, 0.0)
    if target_succ < _succ_of_alpha(r, _ALPHA_MAX):
        raise ValueError(f"target {target_succ} below the reachable range for r={r}")
    lo, hi = 0.0, _ALPHA_MAX
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _succ_of_alpha(r, mid) > target_succ:
            lo = mid
        else:
            hi = mid
        if abs(_succ_of_alpha(r, mid) - target_succ) < tol:
            break
    alpha = 0.5 * (lo + hi)
    point = tradeoff_parametric(r, n, m, alpha)
    if abs(point.succ - target_succ) > 10 * tol:
        raise ConvergenceError(f"bisection stalled at success {point.succ}", best=point)
    return point


def high_succ_expansion(r: int, n: int, m: int, eta: float) -> TradeoffPoint:
    """Near-deterministic fidelity: (4n/m)^(r/2) [1 + eta (1 - 2^(-r/2))].

    Valid to first order in the failure probability eta = 1 - succ; warns
    above eta = 0.2.  The level probabilities drop out entirely here.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if eta > 0.2:
        warnings.warn(f"eta={eta} is outside the first-order validity window", stacklevel=2)
    value = (4.0 * n / m) ** (r / 2.0) * (1.0 + eta * (1.0 - 2.0 ** (-r / 2.0)))
    return TradeoffPoint(succ=1.0 - eta, fidelity=value, method="closed-form-limit")
