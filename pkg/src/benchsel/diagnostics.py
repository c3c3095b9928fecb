"""Normality diagnostics: Shapiro-Wilk, Mardia, Benjamini-Hochberg.

Shapiro-Wilk uses the Royston polynomial approximation for the weights
and the normalizing transformation of the null distribution, valid for
3 <= n <= 5000.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from benchsel.errors import DataError


@dataclass(frozen=True)
class NormalityReport:
    """Per-benchmark Shapiro-Wilk results plus an optional Mardia block."""

    shapiro: dict  # column name -> {"W": float, "p": float, "rejected": bool}
    mardia: dict | None
    alpha: float
    correction: str  # {"bh", "bonferroni", "none"}
    skipped: tuple[str, ...] = ()


def shapiro_wilk(x) -> tuple[float, float]:
    """Shapiro-Wilk W statistic and p-value for 3 <= n <= 5000.

    Weights come from the expected normal order statistics via Royston's
    polynomial corrections; the p-value uses his normalizing transform
    of 1 - W (exact arcsine form at n = 3).
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n < 3 or n > 5000:
        raise DataError(f"sample size {n} outside [3, 5000]")
    if x[0] == x[-1]:
        raise DataError("constant sample")

    m = stats.norm.ppf((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    mm = float(m @ m)
    a = np.empty(n)
    u = 1.0 / math.sqrt(n)
    c = m / math.sqrt(mm)
    if n == 3:
        a = np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    else:
        a_n = (c[-1] + 0.221157 * u - 0.147981 * u**2 - 2.071190 * u**3
               + 4.434685 * u**4 - 2.706056 * u**5)
        if n <= 5:
            phi = (mm - 2 * m[-1] ** 2) / (1 - 2 * a_n**2)
            a = m / math.sqrt(phi)
            a[-1], a[0] = a_n, -a_n
        else:
            a_n1 = (c[-2] + 0.042981 * u - 0.293762 * u**2 - 1.752461 * u**3
                    + 5.682633 * u**4 - 3.582633 * u**5)
            phi = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (
                1 - 2 * a_n**2 - 2 * a_n1**2
            )
            a = m / math.sqrt(phi)
            a[-1], a[0] = a_n, -a_n
            a[-2], a[1] = a_n1, -a_n1

    num = float(a @ x) ** 2
    den = float(np.sum((x - x.mean()) ** 2))
    W = min(num / den, 1.0)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(W))
                               - math.asin(math.sqrt(0.75)))
        p = min(max(p, 0.0), 1.0)
        return W, p
    one_minus = max(1.0 - W, 1e-300)
    if n <= 11:
        g = -2.273 + 0.459 * n
        mu = 0.5440 - 0.39978 * n + 0.025054 * n**2 - 0.0006714 * n**3
        sigma = math.exp(
            1.3822 - 0.77857 * n + 0.062767 * n**2 - 0.0020322 * n**3
        )
        arg = g - math.log(one_minus)
        if arg <= 0:
            return W, 0.0
        z = (-math.log(arg) - mu) / sigma
    else:
        ln = math.log(n)
        mu = -1.5861 - 0.31082 * ln - 0.083751 * ln**2 + 0.0038915 * ln**3
        sigma = math.exp(-0.4803 - 0.082676 * ln + 0.0030302 * ln**2)
        z = (math.log(one_minus) - mu) / sigma
    p = float(stats.norm.sf(z))
    return W, p


def mardia(X) -> dict:
    """Mardia's multivariate skewness and kurtosis with asymptotic p-values.

    Requires a fully observed M x N matrix with M > N.  The skewness
    statistic M*b1/6 is referred to chi^2 with N(N+1)(N+2)/6 degrees of
    freedom; kurtosis is a z-score against mean N(N+2) and variance
    8 N(N+2)/M.  A singular sample covariance falls back to the
    pseudo-inverse with a warning.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be a 2-D matrix")
    if np.isnan(X).any():
        raise DataError("mardia requires a fully observed matrix")
    M, N = X.shape
    if M <= N:
        raise DataError("mardia requires more rows than columns")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / M
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        warnings.warn("singular sample covariance; using pseudo-inverse",
                      stacklevel=2)
        Sinv = np.linalg.pinv(S)
    D = Xc @ Sinv @ Xc.T  # d_ij Mahalanobis kernel
    beta1 = float(np.sum(D**3)) / M**2
    beta2 = float(np.sum(np.diag(D) ** 2)) / M

    skew_stat = M * beta1 / 6.0
    dof = N * (N + 1) * (N + 2) / 6.0
    p_skew = float(stats.chi2.sf(skew_stat, dof))
    kurt_mean = N * (N + 2)
    kurt_sd = math.sqrt(8.0 * N * (N + 2) / M)
    kurt_stat = (beta2 - kurt_mean) / kurt_sd
    p_kurt = float(2 * stats.norm.sf(abs(kurt_stat)))
    return {
        "beta1": beta1,
        "beta2": beta2,
        "skew_stat": skew_stat,
        "kurt_stat": kurt_stat,
        "p_skew": p_skew,
        "p_kurt": p_kurt,
    }


def benjamini_hochberg(pvals, alpha: float) -> list[bool]:
    """BH step-up: reject ranks up to the largest i with p_(i) <= i*alpha/m."""
    pvals = np.asarray(pvals, dtype=float)
    if np.any((pvals < 0) | (pvals > 1)):
        raise DataError("p-values must lie in [0, 1]")
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    m = pvals.size
    order = np.argsort(pvals, kind="stable")
    ranked = pvals[order]
    thresholds = (np.arange(1, m + 1) / m) * alpha
    passing = np.nonzero(ranked <= thresholds)[0]
    rejected = np.zeros(m, dtype=bool)
    if passing.size:
        rejected[order[: passing[-1] + 1]] = True
    return rejected.tolist()


def normality_report(
    m,
    alpha: float = 0.05,
    correction: str = "bh",
    max_n: int = 5000,
    subsample_seed: int = 0,
) -> NormalityReport:
    """Per-benchmark Shapiro-Wilk with multiple-testing correction.

    Columns too short (< 3 observed) or constant are skipped and listed.
    Columns longer than max_n are tested on a seeded subsample, since
    the W approximation is valid only up to n = 5000.
    """
    if correction not in ("bh", "bonferroni", "none"):
        raise DataError("correction must be bh, bonferroni, or none")
    tested: list[str] = []
    results: dict = {}
    skipped: list[str] = []
    rng = np.random.default_rng(subsample_seed)
    for j, name in enumerate(m.benchmark_names):
        col = m.values[m.mask[:, j], j]
        if col.size > max_n:
            col = rng.choice(col, size=max_n, replace=False)
        if col.size < 3 or np.all(col == col[0]):
            skipped.append(name)
            continue
        W, p = shapiro_wilk(col)
        results[name] = {"W": W, "p": p}
        tested.append(name)

    pvals = [results[n]["p"] for n in tested]
    if not tested:
        flags = []
    elif correction == "bh":
        flags = benjamini_hochberg(pvals, alpha)
    elif correction == "bonferroni":
        flags = [p <= alpha / len(pvals) for p in pvals]
    else:
        flags = [p <= alpha for p in pvals]
    for name, rej in zip(tested, flags):
        results[name]["rejected"] = bool(rej)
    return NormalityReport(results, None, alpha, correction, tuple(skipped))
