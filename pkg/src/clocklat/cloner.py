"""Finite-dimensional cloning of arbitrary state families, compressed.

Permutation-invariant channels on m systems live on the symmetric subspace,
so every operator here is stored in occupation-number coordinates (dimension
C(m+d-1, d-1) instead of d^m).  The module builds the k-subset fidelity
operator, solves the optimal probabilistic cloner as an eigenvalue problem,
applies the universal estimate-and-reprepare channel in closed form, and
measures how well that channel simulates any cloner on small groups of
output systems.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .errors import CapExceededError

_SYM_DIM_CAP = 5000
_DENSE_GUARD = 24  # m * d limit for materializing d**m-dimensional objects

_HERMITICITY_TOL = 1e-12
_PSD_TOL = 1e-10


@dataclass(frozen=True)
class StateFamily:
    """Pure states with prior probabilities, the cloner's modeling input."""

    states: tuple[tuple[complex, ...], ...]
    priors: tuple[float, ...]

    def __init__(self, states, priors=None):
        arr = np.atleast_2d(np.asarray(states, dtype=complex))
        norms = np.linalg.norm(arr, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("family states must be unit vectors")
        if priors is None:
            priors = np.full(len(arr), 1.0 / len(arr))
        priors = np.asarray(priors, dtype=float)
        if len(priors) != len(arr) or np.any(priors <= 0):
            raise ValueError("priors must be positive, one per state")
        if abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must sum to one")
        object.__setattr__(self, "states", tuple(tuple(row) for row in arr))
        object.__setattr__(self, "priors", tuple(float(p) for p in priors))

    @property
    def d(self) -> int:
        return len(self.states[0])

    @property
    def size(self) -> int:
        return len(self.states)

    @cached_property
    def states_array(self) -> np.ndarray:
        return np.array(self.states, dtype=complex)

    @cached_property
    def priors_array(self) -> np.ndarray:
        return np.array(self.priors, dtype=float)

    @classmethod
    def equatorial_qubits(cls, count: int = 4) -> "StateFamily":
        """Equal-prior qubit states (|0> + e^{i phi}|1>)/sqrt(2) on a phase grid."""
        phases = 2.0 * math.pi * np.arange(count) / count
        states = np.stack([np.full(count, 1 / math.sqrt(2)),
                           np.exp(1j * phases) / math.sqrt(2)], axis=1)
        return cls(states)


class SymmetricSpace:
    """Occupation-number basis of the symmetric subspace of m d-level systems."""

    def __init__(self, d: int, m: int, occupations: np.ndarray):
        self.d = d
        self.m = m
        self.occupations = occupations
        self._index = {tuple(int(v) for v in occ): i for i, occ in enumerate(occupations)}
        self.log_multinom = (
            gammaln(m + 1) - gammaln(occupations + 1).sum(axis=1)
        )

    @property
    def dim(self) -> int:
        return len(self.occupations)

    def index(self, occ) -> int:
        return self._index[tuple(int(v) for v in occ)]

    def product_state_vector(self, psi) -> np.ndarray:
        """Components <occ | psi^(tensor m)> = sqrt(multinomial) * prod psi^occ."""
        psi = np.asarray(psi, dtype=complex).reshape(self.d)
        occ = self.occupations
        mag = np.abs(psi)
        with np.errstate(divide="ignore", invalid="ignore"):
            logmag = np.log(mag)
            contrib = np.where(occ > 0, occ * logmag[None, :], 0.0)
        phase = np.angle(psi)
        logs = 0.5 * self.log_multinom + contrib.sum(axis=1)
        return np.exp(logs) * np.exp(1j * (occ @ phase))

    def basis_vector_dense(self, i: int) -> np.ndarray:
        """Embedding of one basis element into the full d^m space (oracle use).

        Guarded to tiny systems; the library itself never leaves the
        compressed coordinates.
        """
        if self.m * self.d > _DENSE_GUARD:
            raise CapExceededError(f"dense embedding refused for m*d = {self.m * self.d}")
        occ = self.occupations[i]
        letters = []
        for level, count in enumerate(occ):
            letters.extend([level] * int(count))
        strings = sorted(set(itertools.permutations(letters)))
        vec = np.zeros(self.d**self.m, dtype=complex)
        for s in strings:
            idx = 0
            for letter in s:
                idx = idx * self.d + letter
            vec[idx] = 1.0
        return vec / math.sqrt(len(strings)) if strings else vec

    def dense_isometry(self) -> np.ndarray:
        """Column-stacked dense embeddings of the whole basis (oracle use)."""
        return np.stack([self.basis_vector_dense(i) for i in range(self.dim)], axis=1)


def symmetric_basis(d: int, m: int, cap: int = _SYM_DIM_CAP) -> SymmetricSpace:
    """Occupation basis of the symmetric subspace; dimension C(m+d-1, d-1)."""
    if d < 1 or m < 0:
        raise ValueError("need d >= 1 and m >= 0")
    dim = math.comb(m + d - 1, d - 1)
    if dim > cap:
        raise CapExceededError(f"symmetric subspace dimension {dim} exceeds the cap {cap}")
    occ = _compositions(m, d)
    return SymmetricSpace(d, m, occ)


def _compositions(m: int, d: int) -> np.ndarray:
    if d == 1:
        return np.array([[m]], dtype=np.int64)
    blocks = []
    for v in range(m + 1):
        tail = _compositions(m - v, d - 1)
        head = np.full((len(tail), 1), v, dtype=np.int64)
        blocks.append(np.hstack([head, tail]))
    return np.vstack(blocks)


def _branch_coefficients(sym_m: SymmetricSpace, sym_a: SymmetricSpace, sym_b: SymmetricSpace):
    """Splitting amplitudes <occ_a, occ_b | occ_m> for m = a + b systems.

    Returns, for every pair (i_a, i_b), the index of occ_a + occ_b in the
    m-system basis and the coefficient
    sqrt(multinom(a) * multinom(b) / multinom(m)).
    """
    idx = np.empty((sym_a.dim, sym_b.dim), dtype=np.int64)
    coef = np.empty((sym_a.dim, sym_b.dim))
    for ia, occ_a in enumerate(sym_a.occupations):
        for ib, occ_b in enumerate(sym_b.occupations):
            im = sym_m.index(occ_a + occ_b)
            idx[ia, ib] = im
            coef[ia, ib] = math.exp(
                0.5 * (sym_a.log_multinom[ia] + sym_b.log_multinom[ib] - sym_m.log_multinom[im])
            )
    return idx, coef


def average_input(family: StateFamily, n: int, sym_n: SymmetricSpace | None = None) -> np.ndarray:
    """Prior-weighted n-copy input state tau on the symmetric subspace."""
    sym_n = sym_n or symmetric_basis(family.d, n)
    tau = np.zeros((sym_n.dim, sym_n.dim), dtype=complex)
    for p, psi in zip(family.priors_array, family.states_array):
        v = sym_n.product_state_vector(psi)
        tau += p * np.outer(v, v.conj())
    return tau


def subset_overlap_operator(sym_m: SymmetricSpace, k: int, psi) -> np.ndarray:
    """Average over k-subsets of projectors onto psi^(tensor k), compressed.

    Equals B B^dagger with B indexed by (m-system occupation, spectator
    occupation); evaluating tr[rho . operator] gives the k-copy overlap of a
    symmetric output state rho with k ideal copies of psi.
    """
    m, d = sym_m.m, sym_m.d
    if not 0 <= k <= m:
        raise ValueError("need 0 <= k <= m")
    sym_k = symmetric_basis(d, k)
    sym_b = symmetric_basis(d, m - k)
    phi = sym_k.product_state_vector(psi)
    B = np.zeros((sym_m.dim, sym_b.dim), dtype=complex)
    for ib, occ_b in enumerate(sym_b.occupations):
        for ik, occ_k in enumerate(sym_k.occupations):
            im = sym_m.index(occ_k + occ_b)
            g = math.exp(
                0.5 * (sym_k.log_multinom[ik] + sym_b.log_multinom[ib] - sym_m.log_multinom[im])
            )
            B[im, ib] = g * phi[ik]
    return B @ B.conj().T


def omega_operator(
    family: StateFamily, n: int, m: int, k: int, sym_m: SymmetricSpace | None = None,
    sym_n: SymmetricSpace | None = None
) -> np.ndarray:
    """Prior-weighted fidelity operator on (output) x (conjugated input).

    tr[Omega C] over Choi operators C supported on the symmetric subspaces
    gives the unnormalized average k-copy overlap of the channel.
    """
    sym_m = sym_m or symmetric_basis(family.d, m)
    sym_n = sym_n or symmetric_basis(family.d, n)
    out = np.zeros((sym_m.dim * sym_n.dim,) * 2, dtype=complex)
    for p, psi in zip(family.priors_array, family.states_array):
        A = subset_overlap_operator(sym_m, k, psi)
        w = sym_n.product_state_vector(np.conj(psi))
        out += p * np.kron(A, np.outer(w, w.conj()))
    return out


@dataclass
class ChoiOperator:
    """Choi matrix of a cloner on (symmetric output) x (conjugated symmetric input).

    ``success`` is the heralding probability built into the construction
    (the trace-non-increasing normalization); ``fidelity`` the k-copy value
    it achieves; ``degenerate`` flags a non-unique top eigenvector.
    """

    matrix: np.ndarray
    sym_out: SymmetricSpace
    sym_in: SymmetricSpace
    k: int
    fidelity: float
    success: float
    degenerate: bool = False

    def __post_init__(self):
        M = self.matrix
        if np.max(np.abs(M - M.conj().T)) > _HERMITICITY_TOL * max(1.0, np.abs(M).max()):
            raise ValueError("Choi matrix must be Hermitian")
        if float(np.min(np.linalg.eigvalsh(M))) < -_PSD_TOL:
            raise ValueError("Choi matrix must be positive semidefinite")

    def apply(self, psi) -> np.ndarray:
        """Unnormalized output state for the n-copy input psi^(tensor n).

        The Choi contraction tr_in[(I x rho^T) C] reduces, for a pure n-copy
        input with compressed amplitudes w, to C[a,i,b,j] w_i conj(w_j).
        """
        w = self.sym_in.product_state_vector(np.asarray(psi, dtype=complex))
        C = self.matrix.reshape(self.sym_out.dim, self.sym_in.dim, self.sym_out.dim, self.sym_in.dim)
        return np.einsum("aibj,i,j->ab", C, w, w.conj())

    def success_on(self, psi) -> float:
        return float(np.real(np.trace(self.apply(psi))))


def optimal_cloner(family: StateFamily, n: int, m: int, k: int,
                   degeneracy_tol: float = 1e-9) -> ChoiOperator:
    """Best probabilistic n-to-m cloner judged on random k-output subsets.

    The optimum is the top eigenvalue of the average-input-whitened fidelity
    operator; the Choi matrix is built from its eigenvector with the largest
    success normalization that keeps the operation trace non-increasing,
    namely the smallest nonzero eigenvalue of the average input.
    """
    sym_m = symmetric_basis(family.d, m)
    sym_n = symmetric_basis(family.d, n)
    tau_bar = np.conj(average_input(family, n, sym_n))
    evals, evecs = np.linalg.eigh(tau_bar)
    support = evals > max(evals.max(), 0.0) * 1e-12
    inv_sqrt = np.zeros_like(evals)
    inv_sqrt[support] = evals[support] ** -0.5
    tau_inv_half = (evecs * inv_sqrt[None, :]) @ evecs.conj().T

    omega = omega_operator(family, n, m, k, sym_m=sym_m, sym_n=sym_n)
    sandwich_side = np.kron(np.eye(sym_m.dim), tau_inv_half)
    sandwiched = sandwich_side @ omega @ sandwich_side
    w, v = np.linalg.eigh(sandwiched)
    fidelity = float(w[-1])
    degenerate = bool(len(w) > 1 and w[-2] > w[-1] - degeneracy_tol * max(abs(w[-1]), 1.0))
    top = v[:, -1]
    gamma = float(np.min(evals[support]))  # 1 / ||tau^{-1}||_inf
    psi_vec = sandwich_side @ top
    choi = gamma * np.outer(psi_vec, psi_vec.conj())
    return ChoiOperator(
        matrix=choi,
        sym_out=sym_m,
        sym_in=sym_n,
        k=k,
        fidelity=fidelity,
        success=gamma,
        degenerate=degenerate,
    )


def partial_trace_to_k(sym_m: SymmetricSpace, rho: np.ndarray, k: int):
    """Trace out m-k systems of a symmetric-subspace operator.

    The result lives on the symmetric subspace of the k kept systems; its
    nonzero spectrum matches the full d^k partial trace, so norms computed
    here are the physical ones.
    """
    m, d = sym_m.m, sym_m.d
    if not 0 <= k <= m:
        raise ValueError("need 0 <= k <= m")
    sym_k = symmetric_basis(d, k)
    sym_b = symmetric_basis(d, m - k)
    idx, coef = _branch_coefficients(sym_m, sym_k, sym_b)
    out = np.zeros((sym_k.dim, sym_k.dim), dtype=complex)
    for ib in range(sym_b.dim):
        rows = idx[:, ib]
        c = coef[:, ib]
        out += (c[:, None] * c[None, :]) * rho[np.ix_(rows, rows)]
    return sym_k, out


def compress_dense_state(sym: SymmetricSpace, rho_dense: np.ndarray,
                         support_tol: float = 1e-8) -> np.ndarray:
    """Project a full d^m matrix to occupation coordinates, verifying support.

    Rejects states with more than ``support_tol`` relative weight outside the
    symmetric subspace.  Oracle-scale systems only.
    """
    iso = sym.dense_isometry()
    compressed = iso.conj().T @ rho_dense @ iso
    back = iso @ compressed @ iso.conj().T
    scale = max(float(np.abs(rho_dense).max()), 1e-300)
    if float(np.abs(rho_dense - back).max()) > support_tol * scale:
        raise ValueError("state has support outside the symmetric subspace")
    return compressed


def measure_and_prepare(sym: SymmetricSpace, rho: np.ndarray) -> np.ndarray:
    """Universal estimate-and-reprepare channel on the symmetric subspace.

    Measures with the covariant pure-state resolution and reprepares m copies
    of the estimate; the uniform pure-state integral reduces to splitting
    amplitudes into the 2m-system symmetric basis, so the channel is exact,
    not sampled.  ``rho`` must already be in occupation coordinates (use
    ``compress_dense_state`` for full-space inputs).
    """
    d, m = sym.d, sym.m
    if rho.shape != (sym.dim, sym.dim):
        raise ValueError(f"state shape {rho.shape} does not match the basis")
    sym2 = symmetric_basis(d, 2 * m, cap=max(_SYM_DIM_CAP, math.comb(2 * m + d - 1, d - 1)))
    idx, coef = _branch_coefficients(sym2, sym, sym)
    out = np.zeros_like(rho)
    # group pairs (a, e) by their combined occupation a + e
    buckets: dict[int, list[tuple[int, int, float]]] = {}
    for a in range(sym.dim):
        for e in range(sym.dim):
            buckets.setdefault(int(idx[a, e]), []).append((a, e, coef[a, e]))
    for members in buckets.values():
        rows = np.array([a for a, _, _ in members])
        cols = np.array([e for _, e, _ in members])
        g = np.array([c for _, _, c in members])
        # M[a,b] += g(a,e) g(b,c) rho[c,e] over pairs with a+e == b+c
        block = rho[np.ix_(cols, cols)]  # rho[c, e] with c from (b,c), e from (a,e)
        out[np.ix_(rows, rows)] += (g[:, None] * g[None, :]) * block.T
    return out * (sym.dim / sym2.dim)


def one_norm(M: np.ndarray) -> float:
    """Trace norm of a Hermitian matrix: sum of absolute eigenvalues."""
    return float(np.sum(np.abs(np.linalg.eigvalsh(M))))


def trace_distance(A: np.ndarray, B: np.ndarray) -> float:
    return 0.5 * one_norm(A - B)


@dataclass(frozen=True)
class GapReport:
    probe: tuple[complex, ...]
    success: float
    gap: float
    gap_bound: float
    p_err: float
    p_err_bound: float

    @property
    def gap_ok(self) -> bool:
        return self.gap <= self.gap_bound + 1e-12

    @property
    def p_err_ok(self) -> bool:
        return self.p_err <= self.p_err_bound + 1e-12


def definetti_gap(choi: ChoiOperator, probes, k: int) -> list[GapReport]:
    """How far the estimate-and-reprepare simulation sits from the cloner.

    For each probe input: the 1-norm distance between the k-system marginals
    of the cloner output and of its estimate-and-reprepare image, against the
    2kd/m guarantee for symmetric outputs, and the induced distinguishing
    error probability against 1/2 + k d^2 / (2 m P_succ).
    """
    sym_m = choi.sym_out
    m, d = sym_m.m, sym_m.d
    if k >= m:
        raise ValueError("need k < m")
    reports = []
    for psi in probes:
        psi = np.asarray(psi, dtype=complex)
        sigma = choi.apply(psi)
        succ = float(np.real(np.trace(sigma)))
        if succ <= 1e-14:
            continue
        twirled = measure_and_prepare(sym_m, sigma)
        _, a = partial_trace_to_k(sym_m, sigma, k)
        _, b = partial_trace_to_k(sym_m, twirled, k)
        gap = one_norm(a - b)
        p_err = 0.5 * (1.0 + 0.5 * gap / succ)
        reports.append(
            GapReport(
                probe=tuple(psi),
                success=succ,
                gap=gap,
                gap_bound=2.0 * k * d / m,
                p_err=p_err,
                p_err_bound=0.5 + k * d * d / (2.0 * m * succ),
            )
        )
    return reports


@dataclass(frozen=True)
class KCopyFidelity:
    per_state: tuple[float, ...]
    successes: tuple[float, ...]
    average: float


def kcopy_fidelity(choi: ChoiOperator, family: StateFamily, k: int | None = None) -> KCopyFidelity:
    """k-copy fidelity of a cloner on each family state and on average.

    Per state: overlap of the k-system marginal with k ideal copies, divided
    by the heralding probability.  The average is the ratio of the
    prior-weighted overlap and the prior-weighted success.  States that are
    never heralded are excluded (their entry is nan).
    """
    k = choi.k if k is None else k
    sym_m = choi.sym_out
    per_state, succs = [], []
    overlap_sum = succ_sum = 0.0
    for p, psi in zip(family.priors_array, family.states_array):
        sigma = choi.apply(psi)
        succ = float(np.real(np.trace(sigma)))
        if succ <= 1e-14:
            per_state.append(float("nan"))
            succs.append(succ)
            continue
        A = subset_overlap_operator(sym_m, k, psi)
        overlap = float(np.real(np.trace(sigma @ A)))
        per_state.append(overlap / succ)
        succs.append(succ)
        overlap_sum += p * overlap
        succ_sum += p * succ
    return KCopyFidelity(
        per_state=tuple(per_state),
        successes=tuple(succs),
        average=overlap_sum / succ_sum,
    )


def random_pure_states(d: int, count: int, seed: int) -> np.ndarray:
    """Haar-random pure states as rows, deterministic per seed."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)
