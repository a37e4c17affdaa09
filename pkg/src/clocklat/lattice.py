"""Integer-lattice geometry of degenerate spectra built from energy units.

A d-level system whose eigenvalues are integer combinations of r rationally
independent energy units maps n-fold occupation vectors onto an r-dimensional
integer lattice of distinct total energies.  The Smith normal form of the
coefficient matrix turns that lattice into Z^r with unit spacing.  This module
computes the decomposition with exact integer arithmetic, enumerates the
occupation lattice, and derives first and second moments of the induced
distributions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import CapExceededError

DEFAULT_ENUMERATION_CAP = 100_000_000

_PROB_TOL = 1e-12


# ---------------------------------------------------------------------------
# exact integer linear algebra (arbitrary precision, no numpy overflow)

def _as_int_rows(K) -> tuple[tuple[int, ...], ...]:
    rows = []
    for row in K:
        out = []
        for v in row:
            iv = int(v)
            if iv != v:
                raise ValueError(f"non-integer matrix entry {v!r}")
            out.append(iv)
        rows.append(tuple(out))
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValueError("ragged integer matrix")
    return tuple(rows)


def _int_det(M) -> int:
    """Exact determinant of a square integer matrix (Bareiss elimination)."""
    n = len(M)
    if n == 0:
        return 1
    M = [list(map(int, row)) for row in M]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if M[k][k] == 0:
            for i in range(k + 1, n):
                if M[i][k] != 0:
                    M[k], M[i] = M[i], M[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[-1][-1]


def _mat_mul_int(A, B):
    rows = len(A)
    inner = len(B)
    cols = len(B[0]) if inner else 0
    return [
        [sum(A[i][k] * B[k][j] for k in range(inner)) for j in range(cols)]
        for i in range(rows)
    ]


def _identity_int(n):
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def _row_rank_report(K):
    """Rank over the rationals plus the indices of dependent rows."""
    basis = []  # list of (pivot column, reduced row of Fractions)
    dependent = []
    for idx, row in enumerate(K):
        r = [Fraction(v) for v in row]
        for col, brow in basis:
            if r[col]:
                f = r[col] / brow[col]
                r = [a - f * b for a, b in zip(r, brow)]
        piv = next((j for j, v in enumerate(r) if v != 0), None)
        if piv is None:
            dependent.append(idx)
        else:
            basis.append((piv, r))
    return len(basis), dependent


def _unimodular_inverse(U) -> np.ndarray:
    """Exact integer inverse of a unimodular matrix (Gauss-Jordan on Fractions)."""
    n = len(U)
    m = [[Fraction(int(v)) for v in row] for row in U]
    inv = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next((i for i in range(col, n) if m[i][col] != 0), None)
        if piv is None:
            raise ValueError("singular matrix")
        m[col], m[piv] = m[piv], m[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        f = m[col][col]
        m[col] = [v / f for v in m[col]]
        inv[col] = [v / f for v in inv[col]]
        for i in range(n):
            if i != col and m[i][col]:
                g = m[i][col]
                m[i] = [a - g * b for a, b in zip(m[i], m[col])]
                inv[i] = [a - g * b for a, b in zip(inv[i], inv[col])]
    out = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            v = inv[i][j]
            if v.denominator != 1:
                raise ValueError("matrix is not unimodular")
            out[i, j] = int(v)
    return out


def _round_div(a: int, p: int) -> int:
    """Quotient with remainder of minimal magnitude, |a - q*p| <= |p|/2."""
    q, r = divmod(a, p)
    if 2 * abs(r) > abs(p):
        q += 1 if (r > 0) == (p > 0) else -1
    return q


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class SmithForm:
    """Decomposition K = T . diag(A) . P . S with unimodular T and S.

    ``T`` is r x r, ``S`` is c x c (c = d - 1 columns of K), ``A`` holds the
    positive diagonal with the divisibility chain A[l] | A[l+1], and ``P`` is
    the fixed 0/1 projector selecting the first r coordinates.  Any valid
    decomposition is acceptable; only the invariants are contractual.
    """

    T: tuple[tuple[int, ...], ...]
    A: tuple[int, ...]
    S: tuple[tuple[int, ...], ...]

    @property
    def r(self) -> int:
        return len(self.A)

    @property
    def cols(self) -> int:
        return len(self.S)

    @property
    def P(self) -> np.ndarray:
        P = np.zeros((self.r, self.cols), dtype=np.int64)
        for l in range(self.r):
            P[l, l] = 1
        return P

    @property
    def unit_cell_volume(self) -> int:
        return math.prod(self.A)

    @cached_property
    def smith_map(self) -> np.ndarray:
        """P . S as an array: occupation vector -> unit-spacing lattice point."""
        if self.r == 0:
            return np.zeros((0, self.cols), dtype=np.int64)
        return np.array([self.S[l] for l in range(self.r)], dtype=np.int64)

    @cached_property
    def S_inverse(self) -> np.ndarray:
        if self.cols == 0:
            return np.zeros((0, 0), dtype=np.int64)
        return _unimodular_inverse(self.S)

    def reconstruct(self) -> tuple[tuple[int, ...], ...]:
        """T . A . P . S with exact integers, for verification."""
        AP = [[self.A[i] if i == j else 0 for j in range(self.cols)] for i in range(self.r)]
        TAP = _mat_mul_int([list(r) for r in self.T], AP)
        K = _mat_mul_int(TAP, [list(r) for r in self.S])
        return tuple(tuple(row) for row in K)


@dataclass(frozen=True)
class ClockSpec:
    """Single-clock description: levels, energy units, coefficients, amplitudes.

    ``units`` are r rationally independent energy scales, ``K`` the r x (d-1)
    integer matrix expressing each excited level as a combination of them, and
    ``probs`` the d occupation probabilities of the initial state.  Minimality
    of the unit set cannot be certified from floating-point data; it is the
    caller's assertion and only the rank of ``K`` is validated here.
    """

    units: tuple[float, ...]
    K: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]

    def __init__(self, units, K, probs):
        object.__setattr__(self, "units", tuple(float(u) for u in units))
        object.__setattr__(self, "K", _as_int_rows(K))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))
        self._validate()

    def _validate(self):
        d = len(self.probs)
        if d < 1:
            raise ValueError("probs must have at least one level")
        if any(p <= 0 for p in self.probs):
            raise ValueError("all level probabilities must be positive")
        if abs(sum(self.probs) - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {sum(self.probs)!r}, not 1")
        if any(u <= 0 for u in self.units):
            raise ValueError("energy units must be positive")
        r = len(self.units)
        if len(self.K) != r:
            raise ValueError(f"K has {len(self.K)} rows but {r} units were given")
        cols = len(self.K[0]) if self.K else 0
        if r == 0:
            cols = 0
        if cols != d - 1:
            if not (r == 0 and d == 1):
                raise ValueError(f"K must have d-1 = {d - 1} columns, got {cols}")
        for j in range(cols):
            col = tuple(self.K[i][j] for i in range(r))
            if all(v == 0 for v in col):
                raise ValueError(f"column {j} of K is zero (level energies must be distinct and nonzero)")
        seen = {}
        for j in range(cols):
            col = tuple(self.K[i][j] for i in range(r))
            if col in seen:
                raise ValueError(f"columns {seen[col]} and {j} of K coincide (degenerate levels)")
            seen[col] = j
        rank, dep = _row_rank_report(self.K)
        if rank < r:
            raise ValueError(f"K has rank {rank} < {r}; dependent rows: {dep}")

    @property
    def d(self) -> int:
        return len(self.probs)

    @property
    def r(self) -> int:
        return len(self.units)

    @cached_property
    def probs_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=float)

    @cached_property
    def K_array(self) -> np.ndarray:
        return np.array([list(r) for r in self.K], dtype=np.int64).reshape(self.r, self.d - 1)

    def smith(self) -> SmithForm:
        return self._smith

    @cached_property
    def _smith(self) -> SmithForm:
        return smith_form(self.K) if self.r else SmithForm(T=(), A=(), S=())

    @cached_property
    def smith_units(self) -> np.ndarray:
        """Energy units in the unit-spacing coordinates: units . T . diag(A)."""
        sf = self.smith()
        T = np.array([list(r) for r in sf.T], dtype=float).reshape(self.r, self.r)
        return np.asarray(self.units, dtype=float) @ T * np.array(sf.A, dtype=float)

    def energy_of(self, s) -> float:
        """Total energy of a lattice point in unit-spacing coordinates."""
        return float(np.dot(self.smith_units, np.asarray(s, dtype=float)))


@dataclass(frozen=True)
class Moments:
    """Mean and covariance of the lattice distribution of n clocks.

    ``mean``/``cov`` are in the unit-spacing coordinates used everywhere else
    in the package; ``tilde_mean``/``tilde_cov`` are the same moments read
    through K directly.  ``unit_cell`` relates their determinants:
    unit_cell / sqrt(det tilde_cov) == 1 / sqrt(det cov).
    """

    mean: np.ndarray
    cov: np.ndarray
    tilde_mean: np.ndarray
    tilde_cov: np.ndarray
    unit_cell: int


# ---------------------------------------------------------------------------
# operations

def enumerate_partitions(n: int, d: int, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """All (d-1)-vectors of nonnegative occupations summing to at most n.

    Rows are lexicographically ordered; the count is C(n+d-1, d-1).  Requests
    above ``cap`` are refused rather than attempted.
    """
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    count = math.comb(n + d - 1, d - 1)
    if count > cap:
        raise CapExceededError(
            f"partition lattice for n={n}, d={d} has {count} sites, above the cap {cap}"
        )
    return _occupancy_block(n, d - 1)


def partition_count(n: int, d: int) -> int:
    return math.comb(n + d - 1, d - 1)


def _occupancy_block(n: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    if k == 1:
        return np.arange(n + 1, dtype=np.int64).reshape(-1, 1)
    blocks = []
    for v in range(n + 1):
        tail = _occupancy_block(n - v, k - 1)
        head = np.full((len(tail), 1), v, dtype=np.int64)
        blocks.append(np.hstack([head, tail]))
    return np.vstack(blocks)


def smith_form(K) -> SmithForm:
    """Smith decomposition K = T . diag(A) . P . S of a full-row-rank matrix.

    Elementary row/column reduction with minimal-magnitude pivoting; all
    arithmetic on Python integers, so intermediate growth cannot overflow.
    """
    Kint = _as_int_rows(K)
    r = len(Kint)
    if r == 0:
        return SmithForm(T=(), A=(), S=())
    c = len(Kint[0])
    rank, dep = _row_rank_report(Kint)
    if rank < r:
        raise ValueError(f"matrix has rank {rank} < {r}; dependent rows: {dep}")

    M = [list(row) for row in Kint]
    T = _identity_int(r)   # K = T . M . S is maintained throughout
    S = _identity_int(c)

    def swap_rows(i, j):
        if i != j:
            M[i], M[j] = M[j], M[i]
            for row in T:
                row[i], row[j] = row[j], row[i]

    def swap_cols(i, j):
        if i != j:
            for row in M:
                row[i], row[j] = row[j], row[i]
            S[i], S[j] = S[j], S[i]

    def add_row(i, j, q):
        # M[i] += q * M[j]; compensate T column j -= q * column i
        if q:
            M[i] = [a + q * b for a, b in zip(M[i], M[j])]
            for row in T:
                row[j] -= q * row[i]

    def add_col(i, j, q):
        # M[:,i] += q * M[:,j]; compensate S row j -= q * row i
        if q:
            for row in M:
                row[i] += q * row[j]
            S[j] = [a - q * b for a, b in zip(S[j], S[i])]

    def negate_row(i):
        M[i] = [-a for a in M[i]]
        for row in T:
            row[i] = -row[i]

    for t in range(r):
        while True:
            best = None
            for i in range(t, r):
                for j in range(t, c):
                    v = abs(M[i][j])
                    if v and (best is None or v < best[0]):
                        best = (v, i, j)
            if best is None:
                raise RuntimeError("unexpected rank collapse during reduction")
            swap_rows(t, best[1])
            swap_cols(t, best[2])
            p = M[t][t]
            dirty = False
            for i in range(t + 1, r):
                if M[i][t]:
                    add_row(i, t, -_round_div(M[i][t], p))
                    dirty = dirty or M[i][t] != 0
            for j in range(c):
                if j != t and M[t][j]:
                    add_col(j, t, -_round_div(M[t][j], p))
                    dirty = dirty or M[t][j] != 0
            if dirty:
                continue
            if any(M[i][t] for i in range(t + 1, r)):
                continue
            bad = None
            for i in range(t + 1, r):
                for j in range(t + 1, c):
                    if M[i][j] % p:
                        bad = i
                        break
                if bad is not None:
                    break
            if bad is None:
                break
            add_row(t, bad, 1)

    for t in range(r):
        if M[t][t] < 0:
            negate_row(t)

    form = SmithForm(
        T=tuple(tuple(row) for row in T),
        A=tuple(M[t][t] for t in range(r)),
        S=tuple(tuple(row) for row in S),
    )
    if form.reconstruct() != Kint:
        raise RuntimeError("Smith reduction lost the factorization invariant")
    return form


def unit_cell_volume(K) -> int:
    """Volume of the minimal lattice cell: gcd of all maximal minors of K.

    Computed directly from the minors, independently of the Smith reduction,
    so the two routes can cross-check each other.
    """
    Kint = _as_int_rows(K)
    r = len(Kint)
    if r == 0:
        return 1
    c = len(Kint[0])
    if c < r:
        raise ValueError("wide matrix required (full row rank)")
    g = 0
    for cols in itertools.combinations(range(c), r):
        sub = [[Kint[i][j] for j in cols] for i in range(r)]
        g = math.gcd(g, abs(_int_det(sub)))
    if g == 0:
        rank, dep = _row_rank_report(Kint)
        raise ValueError(f"matrix has rank {rank} < {r}; dependent rows: {dep}")
    return g


def smith_vector(form: SmithForm, partition) -> tuple[int, ...]:
    """Unit-spacing lattice coordinates P . S . n of an occupation vector."""
    part = np.asarray(partition, dtype=np.int64).reshape(-1)
    if part.shape[0] != form.cols:
        raise ValueError(f"partition has length {part.shape[0]}, expected {form.cols}")
    return tuple(int(v) for v in form.smith_map @ part)


def smith_vectors(form: SmithForm, partitions: np.ndarray) -> np.ndarray:
    """Vectorized `smith_vector` over rows of an occupation array."""
    parts = np.asarray(partitions, dtype=np.int64)
    return parts @ form.smith_map.T


def lattice_size(spec: ClockSpec, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> int:
    """Number of distinct total energies of n clocks."""
    parts = enumerate_partitions(n, spec.d, cap=cap)
    svecs = smith_vectors(spec.smith(), parts)
    if svecs.shape[1] == 0:
        return 1
    return len(np.unique(svecs, axis=0))


def moments(spec: ClockSpec, n: int) -> Moments:
    """Mean and covariance of the lattice distribution for n clocks.

    The occupation vector is multinomial(n, probs); both the unit-spacing and
    the K-coordinate images are returned.
    """
    p = spec.probs_array[1:]
    cov_occ = n * (np.diag(p) - np.outer(p, p))
    mean_occ = n * p
    L = spec.smith().smith_map.astype(float)
    Kf = spec.K_array.astype(float)
    return Moments(
        mean=L @ mean_occ,
        cov=L @ cov_occ @ L.T,
        tilde_mean=Kf @ mean_occ,
        tilde_cov=Kf @ cov_occ @ Kf.T,
        unit_cell=spec.smith().unit_cell_volume,
    )


@dataclass(frozen=True)
class EquivalenceReport:
    equivalent: bool
    diagnostics: tuple[str, ...]
    invariants_a: tuple[float, ...]
    invariants_b: tuple[float, ...]
    sizes_a: tuple[int, ...]
    sizes_b: tuple[int, ...]


def equivalent_representation_check(
    spec_a: ClockSpec,
    spec_b: ClockSpec,
    probe_ns: tuple[int, ...] = (2, 3, 4),
    rtol: float = 1e-10,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> EquivalenceReport:
    """Consistency check for two unit choices describing the same spectrum.

    Compares the unit-choice invariant unit_cell / sqrt(det tilde_cov) and the
    lattice sizes at the probe copy numbers.  Whether the two specs really
    describe the same physical spectrum is the caller's claim; only these
    consequences are verified.
    """
    problems = []
    inv_a, inv_b, size_a, size_b = [], [], [], []
    for n in probe_ns:
        ma, mb = moments(spec_a, n), moments(spec_b, n)
        ia = ma.unit_cell / math.sqrt(np.linalg.det(ma.tilde_cov))
        ib = mb.unit_cell / math.sqrt(np.linalg.det(mb.tilde_cov))
        inv_a.append(ia)
        inv_b.append(ib)
        if abs(ia - ib) > rtol * max(abs(ia), abs(ib)):
            problems.append(f"n={n}: invariant mismatch {ia!r} vs {ib!r}")
        sa, sb = lattice_size(spec_a, n, cap), lattice_size(spec_b, n, cap)
        size_a.append(sa)
        size_b.append(sb)
        if sa != sb:
            problems.append(f"n={n}: lattice sizes differ {sa} vs {sb}")
    return EquivalenceReport(
        equivalent=not problems,
        diagnostics=tuple(problems),
        invariants_a=tuple(inv_a),
        invariants_b=tuple(inv_b),
        sizes_a=tuple(size_a),
        sizes_b=tuple(size_b),
    )
