"""Greedy benchmark subset selection and spectral diagnostics.

Entropy selection is pivoted Cholesky with the max-residual-diagonal
pivot rule; mutual information selection combines the same forward
Cholesky recursion with a fresh factorization of the complement block
at every step.  Ties break lexicographically: largest gain, then lowest
index, so runs are fully deterministic.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from benchsel.errors import DataError, NumericalError

LOG_2PIE = math.log(2 * math.pi * math.e)

# A pick is refused when its residual variance falls below this times
# the largest initial diagonal entry (numerical-rank exhaustion).
DEGENERACY_REL_FLOOR = 1e-12


@dataclass(frozen=True)
class SelectionResult:
    """Ordered selection with per-step gains and residual diagnostics."""

    order: tuple[int, ...]
    gains: tuple[float, ...]       # per-step marginal gains, nats
    residual_trace: tuple[float, ...]  # length len(order)+1
    objective: str                 # {entropy, mi, budgeted_entropy, random}
    seed: int | None = None
    truncated: bool = False
    reevaluations: int | None = None  # lazy greedy only
    total_cost: float | None = None   # budgeted only

    def __post_init__(self):
        if len(set(self.order)) != len(self.order):
            raise DataError("selection order contains duplicates")

    def to_dict(self, benchmark_names=None) -> dict:
        names = (
            [benchmark_names[j] for j in self.order]
            if benchmark_names is not None
            else None
        )
        d = {
            "objective": self.objective,
            "order": list(self.order),
            "gains": list(self.gains),
            "residual_trace": list(self.residual_trace),
            "truncated": self.truncated,
        }
        if names is not None:
            d["selected"] = names
        if self.seed is not None:
            d["seed"] = self.seed
        if self.reevaluations is not None:
            d["reevaluations"] = self.reevaluations
        if self.total_cost is not None:
            d["total_cost"] = self.total_cost
        return d


@dataclass(frozen=True)
class SpectrumReport:
    """Sorted eigenvalues with cumulative explained-variance fractions."""

    eigenvalues: np.ndarray
    explained: np.ndarray
    residual_fraction: np.ndarray

    def smallest_k(self, fraction: float) -> int:
        """Smallest k with explained variance >= fraction."""
        idx = np.nonzero(self.explained >= fraction - 1e-12)[0]
        return int(idx[0]) + 1 if idx.size else len(self.eigenvalues)


@dataclass(frozen=True)
class CostModel:
    """Per-element costs, total budget, and the entropy shift constant."""

    costs: np.ndarray
    budget: float
    shift_c: float | None = None  # None: computed per instance

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if np.any(costs <= 0):
            raise DataError("costs must be positive")
        if self.budget <= 0:
            raise DataError("budget must be positive")
        costs.setflags(write=False)
        object.__setattr__(self, "costs", costs)

    def resolved_shift(self, S: np.ndarray) -> float:
        """The shift constant actually used: the configured value, or the
        smallest nonnegative constant making every singleton entropy
        nonnegative."""
        if self.shift_c is not None:
            return float(self.shift_c)
        diag = np.diag(np.asarray(S, dtype=float))
        min_singleton = 0.5 * (LOG_2PIE + np.log(np.maximum(diag, 1e-300))).min()
        return max(0.0, -float(min_singleton))


def _check_cov(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError("covariance must be square")
    return 0.5 * (S + S.T)


def greedy_entropy(S: np.ndarray, k: int) -> SelectionResult:
    """Greedy entropy maximization = pivoted Cholesky with max pivot.

    Maintains the residual diagonal d and Cholesky rows; each step picks
    argmax d (ties to the lowest index), records the marginal gain
    0.5*log(2*pi*e*d) in nats, and downdates the remaining diagonal.
    Stops early (truncated=True) once the largest residual falls below
    the degeneracy floor.
    """
    S = _check_cov(S)
    N = S.shape[0]
    if not 1 <= k <= N:
        raise DataError(f"k={k} out of range [1, {N}]")
    d = np.diag(S).copy()
    if np.any(d < -1e-9):
        raise DataError("covariance has a negative diagonal entry")
    floor = DEGENERACY_REL_FLOOR * max(d.max(), 0.0)

    ell = np.zeros((N, k))
    active = np.ones(N, dtype=bool)
    order: list[int] = []
    gains: list[float] = []
    trace = [float(np.sum(d))]
    truncated = False
    for t in range(k):
        masked = np.where(active, d, -np.inf)
        j_star = int(np.argmax(masked))  # argmax takes the lowest index on ties
        if np.any(d[active] < -1e-9):
            raise NumericalError("negative residual variance: input is not PSD")
        if d[j_star] <= floor:
            truncated = True
            break
        gains.append(0.5 * (LOG_2PIE + math.log(d[j_star])))
        order.append(j_star)
        active[j_star] = False
        sq = math.sqrt(d[j_star])
        ell[j_star, t] = sq
        idx = np.flatnonzero(active)
        if idx.size:
            ell[idx, t] = (S[idx, j_star] - ell[idx, :t] @ ell[j_star, :t]) / sq
            d[idx] -= ell[idx, t] ** 2
        trace.append(float(np.sum(d[active])))
    return SelectionResult(
        tuple(order), tuple(gains), tuple(trace), "entropy", truncated=truncated
    )


def _complement_precision_diag(S_bar: np.ndarray, psd_floor: float) -> np.ndarray:
    """Diagonal of the inverse of the complement block.

    Cholesky route: P_jj = ||(L^{-1})_{:,j}||^2 from one triangular
    solve.  Falls back to an eigendecomposition with eigenvalues
    clamped to psd_floor when the block is not positive definite.
    """
    n = S_bar.shape[0]
    try:
        L = np.linalg.cholesky(S_bar)
        Linv = linalg.solve_triangular(L, np.eye(n), lower=True)
        return np.sum(Linv**2, axis=0)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(S_bar)
        w = np.maximum(w, psd_floor)
        return np.sum(V**2 / w, axis=1)


def greedy_mi(S: np.ndarray, k: int, psd_floor: float = 1e-10) -> SelectionResult:
    """Greedy mutual information maximization.

    Per step: fresh Cholesky of the complement block gives the precision
    diagonal P_jj; the criterion is argmax 0.5*(log d_j + log P_jj) with
    lowest-index tie-breaking.  The forward residual diagonal d follows
    the entropy recursion.  Negative gains are legal (MI is non-monotone)
    and simply recorded.
    """
    S = _check_cov(S)
    N = S.shape[0]
    if not 1 <= k <= N - 1:
        raise DataError(f"k={k} out of range [1, {N - 1}] (complement nonempty)")
    d = np.diag(S).copy()
    ell = np.zeros((N, k))
    active = np.ones(N, dtype=bool)
    order: list[int] = []
    gains: list[float] = []
    trace = [float(np.sum(d))]
    for t in range(k):
        comp = np.flatnonzero(active)
        P = _complement_precision_diag(S[np.ix_(comp, comp)], psd_floor)
        with np.errstate(divide="ignore", invalid="ignore"):
            crit = 0.5 * (np.log(d[comp]) + np.log(P))
        pos = int(np.argmax(crit))
        j_star = int(comp[pos])
        gains.append(float(crit[pos]))
        order.append(j_star)
        active[j_star] = False
        sq = math.sqrt(d[j_star])
        ell[j_star, t] = sq
        idx = np.flatnonzero(active)
        if idx.size:
            ell[idx, t] = (S[idx, j_star] - ell[idx, :t] @ ell[j_star, :t]) / sq
            d[idx] -= ell[idx, t] ** 2
        trace.append(float(np.sum(d[active])))
    return SelectionResult(tuple(order), tuple(gains), tuple(trace), "mi")


def lazy_greedy_entropy(S: np.ndarray, k: int) -> SelectionResult:
    """Lazy greedy entropy: identical output to greedy_entropy.

    Marginal gains only shrink as the selection grows, so a stale gain
    is a valid upper bound.  A max-heap keyed on (-d, index) pops
    candidates; stale entries are brought up to date (counted in
    reevaluations) and reinserted unless they still dominate.
    """
    S = _check_cov(S)
    N = S.shape[0]
    if not 1 <= k <= N:
        raise DataError(f"k={k} out of range [1, {N}]")
    d = np.diag(S).astype(float).copy()
    if np.any(d < -1e-9):
        raise DataError("covariance has a negative diagonal entry")
    floor = DEGENERACY_REL_FLOOR * max(d.max(), 0.0)

    ell = np.zeros((N, k))
    fresh_at = np.zeros(N, dtype=int)  # step d[j] is valid for
    heap = [(-d[j], j) for j in range(N)]
    heapq.heapify(heap)
    selected = np.zeros(N, dtype=bool)
    order: list[int] = []
    gains: list[float] = []
    reevals = N  # the initial diagonal scan
    truncated = False

    def refresh(j: int, t: int) -> None:
        # Apply the Cholesky downdates j missed while buried in the heap.
        for s in range(fresh_at[j], t):
            p = order[s]
            ell[j, s] = (S[j, p] - ell[j, :s] @ ell[p, :s]) / ell[p, s]
            d[j] -= ell[j, s] ** 2
        fresh_at[j] = t

    for t in range(k):
        j = -1
        while True:
            key, j = heapq.heappop(heap)
            if selected[j]:
                continue
            if -key != d[j]:
                continue  # outdated duplicate; a fresher entry exists
            if fresh_at[j] < t:
                refresh(j, t)
                reevals += 1
                entry = (-d[j], j)
                if heap and entry > heap[0]:
                    heapq.heappush(heap, entry)
                    continue
            break
        if d[j] < -1e-9:
            raise NumericalError("negative residual variance: input is not PSD")
        if d[j] <= floor:
            truncated = True
            break
        order.append(j)
        selected[j] = True
        ell[j, t] = math.sqrt(d[j])

    # Gains and residual-trace diagnostics need every element's diagonal
    # trajectory, which lazy evaluation skipped (and its scalar refresh can
    # differ from the vectorized downdate by an ulp); replay the identical
    # eager recursion so the reported numbers match it bitwise.
    d2 = np.diag(S).astype(float).copy()
    ell2 = np.zeros((N, len(order)))
    active = np.ones(N, dtype=bool)
    trace = [float(np.sum(d2))]
    for t, j_star in enumerate(order):
        gains.append(0.5 * (LOG_2PIE + math.log(d2[j_star])))
        active[j_star] = False
        sq = math.sqrt(d2[j_star])
        ell2[j_star, t] = sq
        idx = np.flatnonzero(active)
        if idx.size:
            ell2[idx, t] = (S[idx, j_star] - ell2[idx, :t] @ ell2[j_star, :t]) / sq
            d2[idx] -= ell2[idx, t] ** 2
        trace.append(float(np.sum(d2[active])))

    return SelectionResult(
        tuple(order), tuple(gains), tuple(trace), "entropy",
        truncated=truncated, reevaluations=reevals,
    )


def budgeted_entropy(S: np.ndarray, cm: CostModel) -> SelectionResult:
    """Cost-aware entropy selection: modified greedy under a knapsack.

    Runs (i) cost-effective greedy on the shifted gain-to-cost ratio
    (delta + shift_c)/cost over affordable elements, and (ii) the best
    affordable singleton under the shifted objective; returns whichever
    set has the larger shifted objective value.
    """
    S = _check_cov(S)
    N = S.shape[0]
    if cm.costs.size != N:
        raise DataError("cost vector length does not match covariance size")
    diag = np.diag(S)
    affordable0 = cm.costs <= cm.budget
    if not affordable0.any():
        raise DataError("no element is affordable within the budget")

    shift_c = cm.resolved_shift(S)

    floor = DEGENERACY_REL_FLOOR * max(diag.max(), 0.0)
    d = diag.astype(float).copy()
    ell = np.zeros((N, N))
    active = np.ones(N, dtype=bool)
    order: list[int] = []
    gains: list[float] = []
    trace = [float(np.sum(d))]
    spent = 0.0
    negative_marginal = False
    t = 0
    while True:
        remaining = cm.budget - spent
        cand = np.flatnonzero(active & (cm.costs <= remaining) & (d > floor))
        if cand.size == 0:
            break
        marg = 0.5 * (LOG_2PIE + np.log(d[cand])) + shift_c
        if np.any(marg < 0):
            negative_marginal = True
        ratio = marg / cm.costs[cand]
        pos = int(np.argmax(ratio))
        j_star = int(cand[pos])
        gains.append(float(marg[pos] - shift_c))
        order.append(j_star)
        active[j_star] = False
        spent += float(cm.costs[j_star])
        sq = math.sqrt(d[j_star])
        ell[j_star, t] = sq
        idx = np.flatnonzero(active)
        if idx.size:
            ell[idx, t] = (S[idx, j_star] - ell[idx, :t] @ ell[j_star, :t]) / sq
            d[idx] -= ell[idx, t] ** 2
        trace.append(float(np.sum(d[active])))
        t += 1

    if negative_marginal:
        warnings.warn(
            "shifted marginal gain went negative; the approximation "
            "guarantee is void",
            stacklevel=2,
        )

    def shifted_objective(idx_set):
        if not idx_set:
            return 0.0
        return entropy_value(S, idx_set) + shift_c * len(idx_set)

    set_value = shifted_objective(order)
    singles = np.flatnonzero(affordable0 & (diag > floor))
    best_single = int(singles[np.argmax(diag[singles])])
    single_value = shifted_objective([best_single])

    if single_value > set_value:
        g = 0.5 * (LOG_2PIE + math.log(diag[best_single]))
        total = float(np.sum(diag))
        rt = residual_trace(S, [best_single]) if N > 1 else 0.0
        return SelectionResult(
            (best_single,), (g,), (total, rt), "budgeted_entropy",
            total_cost=float(cm.costs[best_single]),
        )
    return SelectionResult(
        tuple(order), tuple(gains), tuple(trace), "budgeted_entropy",
        total_cost=spent,
    )


def random_select(N: int, k: int, seed: int) -> SelectionResult:
    """First k elements of a seeded uniform permutation of range(N)."""
    if k > N:
        raise DataError(f"k={k} exceeds N={N}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(N)
    order = tuple(int(j) for j in perm[:k])
    return SelectionResult(
        order, (math.nan,) * k, (math.nan,) * (k + 1), "random", seed=seed
    )


def entropy_value(S: np.ndarray, A) -> float:
    """Joint differential entropy 0.5*logdet(2*pi*e*Sigma_AA) in nats."""
    S = _check_cov(S)
    idx = np.asarray(sorted(A), dtype=int)
    if idx.size == 0:
        raise DataError("A must be nonempty")
    sub = S[np.ix_(idx, idx)]
    try:
        L = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError:
        raise NumericalError("selected principal submatrix is singular") from None
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return 0.5 * (idx.size * LOG_2PIE + logdet)


def _logdet_psd(sub: np.ndarray, psd_floor: float) -> float:
    sign, logdet = np.linalg.slogdet(sub)
    if sign > 0 and np.isfinite(logdet):
        return float(logdet)
    w = np.linalg.eigvalsh(sub)
    return float(np.sum(np.log(np.maximum(w, psd_floor))))


def mi_value(S: np.ndarray, A, psd_floor: float = 1e-10) -> float:
    """Mutual information I(X_A; X_complement) in nats.

    Evaluated as 0.5*(logdet Sigma_AA + logdet Sigma_CC - logdet Sigma);
    empty or full A returns 0 by convention.  Singular blocks fall back
    to clamped-eigenvalue log-determinants.
    """
    S = _check_cov(S)
    N = S.shape[0]
    idx = np.asarray(sorted(A), dtype=int)
    if idx.size == 0 or idx.size == N:
        return 0.0
    comp = np.setdiff1d(np.arange(N), idx)
    v = 0.5 * (
        _logdet_psd(S[np.ix_(idx, idx)], psd_floor)
        + _logdet_psd(S[np.ix_(comp, comp)], psd_floor)
        - _logdet_psd(S, psd_floor)
    )
    return float(v)


def spectrum(R: np.ndarray) -> SpectrumReport:
    """Eigenvalue decay diagnostic: explained and residual fractions."""
    R = _check_cov(R)
    w = np.linalg.eigvalsh(R)[::-1]
    total = float(np.sum(w))
    explained = np.cumsum(w) / total
    return SpectrumReport(w, explained, 1.0 - explained)


def residual_trace(S: np.ndarray, A, psd_floor: float | None = None) -> float:
    """Trace of the Schur complement of Sigma_AA: total residual variance.

    A singular Sigma_AA raises unless psd_floor is given, in which case
    a clamped-eigenvalue solve is used with a warning.
    """
    S = _check_cov(S)
    N = S.shape[0]
    idx = np.asarray(sorted(A), dtype=int)
    if idx.size == 0:
        return float(np.trace(S))
    if idx.size == N:
        return 0.0
    comp = np.setdiff1d(np.arange(N), idx)
    Saa = S[np.ix_(idx, idx)]
    Sca = S[np.ix_(comp, idx)]
    try:
        c, low = linalg.cho_factor(Saa, lower=True)
        X = linalg.cho_solve((c, low), Sca.T)
    except np.linalg.LinAlgError:
        if psd_floor is None:
            raise NumericalError(
                "Sigma_AA is singular; pass psd_floor to use a clamped solve"
            ) from None
        warnings.warn("Sigma_AA singular; using clamped-eigenvalue solve",
                      stacklevel=2)
        w, V = np.linalg.eigh(Saa)
        w = np.maximum(w, psd_floor)
        X = V @ ((V.T @ Sca.T) / w[:, None])
    val = float(np.trace(S[np.ix_(comp, comp)]) - np.sum(Sca * X.T))
    return val
