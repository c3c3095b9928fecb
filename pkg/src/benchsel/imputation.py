"""Gaussian conditional imputation and the standardized-space R^2 metric.

Predictions condition only on the selected benchmarks actually observed
for a row; with nothing to condition on, the marginal mean is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from benchsel.errors import DataError, NumericalError
from benchsel.covariance import GaussianModel

STANDARDIZED_CLIP = 10.0


@dataclass(frozen=True)
class ImputationResult:
    """Single-row imputation output.

    predicted / cond_var are keyed by target column index; used_condition
    is the conditioning set actually applied (selected AND observed).
    """

    predicted: dict[int, float]
    cond_var: dict[int, float]
    used_condition: tuple[int, ...]


def impute_row(
    obs: dict[int, float],
    selected,
    model: GaussianModel,
    ridge: float = 1e-2,
    targets=None,
) -> ImputationResult:
    """Conditional mean and variance for a partially observed row.

    `obs` maps column index -> standardized value.  The conditioning set
    is selected ∩ keys(obs); `targets` defaults to every column outside
    `selected`.  Solves (Sigma_CC + ridge*I) x = obs_C - mu_C; with an
    empty conditioning set the prediction is the marginal mean.
    """
    N = model.mean.size
    selected = sorted(set(int(j) for j in selected))
    if selected and (selected[0] < 0 or selected[-1] >= N):
        raise DataError("selected index out of range")
    cond = [j for j in selected if j in obs]
    if targets is None:
        targets = [j for j in range(N) if j not in selected]
    targets = sorted(set(int(j) for j in targets))

    mu, Sigma = model.mean, model.cov
    if not cond:
        predicted = {j: float(mu[j]) for j in targets}
        cond_var = {j: float(Sigma[j, j]) for j in targets}
        return ImputationResult(predicted, cond_var, ())

    C = np.asarray(cond, dtype=int)
    T = np.asarray(targets, dtype=int)
    Scc = Sigma[np.ix_(C, C)] + ridge * np.eye(C.size)
    Stc = Sigma[np.ix_(T, C)]
    resid = np.array([obs[j] for j in cond]) - mu[C]
    try:
        c, low = linalg.cho_factor(Scc, lower=True)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "conditioning block is singular even with ridge"
        ) from None
    x = linalg.cho_solve((c, low), resid)
    pred = mu[T] + Stc @ x
    gain = linalg.cho_solve((c, low), Stc.T)  # Scc^{-1} Sigma_CT
    cvar = np.diag(Sigma)[T] - np.sum(Stc * gain.T, axis=1)

    predicted = {int(j): float(p) for j, p in zip(T, pred)}
    cond_var = {int(j): float(v) for j, v in zip(T, cvar)}
    return ImputationResult(predicted, cond_var, tuple(cond))


def clip_standardized(v: float) -> float:
    """Clamp a standardized value to [-10, 10]."""
    return float(min(max(v, -STANDARDIZED_CLIP), STANDARDIZED_CLIP))


def r2_standardized(pred, target) -> float:
    """1 - SSE / sum(target^2): the zero prediction is the baseline.

    Targets are assumed standardized by training stats and clipped, so
    predicting zero corresponds to predicting the training mean.  An
    all-zero target vector is degenerate and returns NaN (excluded from
    fold averaging by callers).
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.ndim != 1 or pred.size == 0:
        raise DataError("pred and target must be equal-length nonempty vectors")
    denom = float(np.sum(target**2))
    if denom == 0.0:
        return math.nan
    sse = float(np.sum((pred - target) ** 2))
    return 1.0 - sse / denom
