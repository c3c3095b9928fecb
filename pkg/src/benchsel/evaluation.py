"""Cross-validation protocol and method comparison.

Models are permuted into balanced folds; per fold a training subset is
drawn from the pool at the requested holdout fraction, column stats and
the Gaussian model are fit on training data only, each selection method
picks benchmarks on the training covariance, and held-out rows are
imputed conditioning only on selected benchmarks they actually report.

All randomness derives from a single root seed through keyed
SeedSequence substreams (fold partition: key 0; training subsample:
key 1; random-selection draws: key 2), so adding a method or holdout
fraction never perturbs the draws of another.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from benchsel.errors import DataError
from benchsel.covariance import EmConfig, em_fit, estimate_full
from benchsel.imputation import clip_standardized, impute_row, r2_standardized
from benchsel.score_matrix import (
    ColumnStats,
    LogitParams,
    ScoreMatrix,
    column_stats,
    logit_params,
    logit_transform,
    standardize,
)
from benchsel.selection import (
    entropy_value,
    greedy_entropy,
    greedy_mi,
    mi_value,
    residual_trace,
)

VALID_METHODS = ("entropy", "mi", "random")


@dataclass(frozen=True)
class CvConfig:
    folds: int = 10
    holdout_fractions: tuple[float, ...] = (0.1, 0.2, 0.5, 0.9)
    k_max: int = 15
    methods: tuple[str, ...] = ("entropy", "mi", "random")
    seed: int = 0
    estimator_policy: str = "auto"  # {"auto", "full", "em"}
    ridge: float = 1e-2
    logit_mode: bool = False
    logit_epsilon: float = 1e-3
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        if self.folds < 2:
            raise DataError("folds must be >= 2")
        if self.k_max < 1:
            raise DataError("k_max must be >= 1")
        for p in self.holdout_fractions:
            if not 0 < p < 1:
                raise DataError("holdout fractions must lie in (0, 1)")
        for m in self.methods:
            if m not in VALID_METHODS:
                raise DataError(f"unknown method {m!r}")
        if self.estimator_policy not in ("auto", "full", "em"):
            raise DataError("estimator_policy must be auto, full, or em")


@dataclass(frozen=True)
class CvCell:
    method: str
    holdout_p: float
    fold: int
    k: int
    r2: float
    residual_fraction: float
    entropy: float
    mi: float


@dataclass(frozen=True)
class CvReport:
    cells: tuple[CvCell, ...]
    selection_orders: dict  # (method, holdout_p, fold) -> benchmark names
    summary: dict           # (method, holdout_p, k) -> {"mean": .., "std": .., "n": ..}
    warnings: tuple[str, ...] = ()

    def to_csv(self, sink) -> None:
        """Tidy CSV, one row per cell."""
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(
            ["method", "holdout_p", "fold", "k",
             "r2", "residual_fraction", "entropy", "mi"]
        )
        for c in self.cells:
            writer.writerow(
                [c.method, repr(c.holdout_p), c.fold, c.k,
                 repr(c.r2), repr(c.residual_fraction),
                 repr(c.entropy), repr(c.mi)]
            )

    def summary_dict(self) -> dict:
        out = {"summary": [], "selection_orders": [], "warnings": list(self.warnings)}
        for (method, p, k) in sorted(self.summary):
            s = self.summary[(method, p, k)]
            out["summary"].append(
                {"method": method, "holdout_p": p, "k": k, **s}
            )
        for (method, p, fold) in sorted(self.selection_orders):
            out["selection_orders"].append(
                {"method": method, "holdout_p": p, "fold": fold,
                 "order": list(self.selection_orders[(method, p, fold)])}
            )
        return out


def _p_key(p: float) -> int:
    # Stable integer key for a holdout fraction, for seed derivation.
    return int(round(p * 10**6))


def _balanced_folds(M: int, K: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(M)
    return [np.asarray(f) for f in np.array_split(perm, K)]


def training_size(p: float, M: int, pool_size: int) -> int:
    """Round-half-to-even (1-p)*M, capped at the pool size."""
    return min(round((1 - p) * M), pool_size)


def _fit_training_model(values, mask, policy: str, em_cfg: EmConfig,
                        names_rows, names_cols):
    m = ScoreMatrix(values, mask, names_rows, names_cols)
    complete = bool(mask.all())
    if policy == "full" or (policy == "auto" and complete):
        if not complete:
            raise DataError("estimator_policy=full requires complete training data")
        return estimate_full(m)
    return em_fit(m, em_cfg)


def run_cv(m: ScoreMatrix, cfg: CvConfig = CvConfig()) -> CvReport:
    """Execute the full cross-validation protocol; deterministic in cfg.seed."""
    M, N = m.shape
    if M < cfg.folds:
        raise DataError("not enough models for the requested fold count")

    fold_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    folds = _balanced_folds(M, cfg.folds, fold_rng)

    cells: list[CvCell] = []
    orders: dict = {}
    warnings_out: list[str] = []

    for p in cfg.holdout_fractions:
        pk = _p_key(p)
        for fold_idx, val_rows in enumerate(folds):
            pool = np.concatenate(
                [f for i, f in enumerate(folds) if i != fold_idx]
            )
            sub_rng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, 1, pk, fold_idx])
            )
            pool_perm = pool[sub_rng.permutation(pool.size)]
            train_rows = pool_perm[: training_size(p, M, pool.size)]

            result = _run_fold(
                m, cfg, p, pk, fold_idx, train_rows, val_rows, warnings_out
            )
            if result is None:
                continue
            fold_cells, fold_orders = result
            cells.extend(fold_cells)
            orders.update(fold_orders)

    summary: dict = {}
    by_key: dict = {}
    for c in cells:
        by_key.setdefault((c.method, c.holdout_p, c.k), []).append(c.r2)
    for key, vals in by_key.items():
        finite = [v for v in vals if not math.isnan(v)]
        if finite:
            mean = float(np.mean(finite))
            std = float(np.std(finite, ddof=1)) if len(finite) > 1 else 0.0
        else:
            mean, std = math.nan, math.nan
        summary[key] = {"mean": mean, "std": std, "n": len(finite)}

    return CvReport(tuple(cells), orders, summary, tuple(warnings_out))


def _run_fold(m, cfg, p, pk, fold_idx, train_rows, val_rows, warnings_out):
    tr_vals = m.values[train_rows]
    tr_mask = m.mask[train_rows]
    va_vals = m.values[val_rows]
    va_mask = m.mask[val_rows]

    # Columns must be estimable from training data: >= 2 observations and
    # nonzero variance; others are excluded from this fold.
    active = []
    for j in range(m.shape[1]):
        col = tr_vals[tr_mask[:, j], j]
        if col.size >= 2 and col.std(ddof=1) > 0:
            active.append(j)
        else:
            warnings_out.append(
                f"p={p} fold={fold_idx}: column {m.benchmark_names[j]!r} "
                "excluded (too few training observations or zero variance)"
            )
    if len(active) < 2:
        warnings_out.append(
            f"p={p} fold={fold_idx}: fewer than 2 usable columns; fold skipped"
        )
        return None
    active = np.asarray(active, dtype=int)
    names = tuple(m.benchmark_names[j] for j in active)
    tr_vals, tr_mask = tr_vals[:, active], tr_mask[:, active]
    va_vals, va_mask = va_vals[:, active], va_mask[:, active]

    keep = tr_mask.any(axis=1)
    if not keep.all():
        warnings_out.append(
            f"p={p} fold={fold_idx}: dropped {int((~keep).sum())} empty "
            "training rows"
        )
        tr_vals, tr_mask = tr_vals[keep], tr_mask[keep]
    train_names = tuple(f"r{i}" for i in range(tr_vals.shape[0]))
    train_m = ScoreMatrix(tr_vals, tr_mask, train_names, names)

    # Raw-space stats back the final R^2 in logit mode.
    raw_stats = column_stats(train_m)
    if cfg.logit_mode:
        lp = logit_params(train_m, cfg.logit_epsilon)
        work_train = logit_transform(train_m, lp)
        va_work = logit_transform(
            ScoreMatrix(
                va_vals, va_mask,
                tuple(f"v{i}" for i in range(va_vals.shape[0])), names,
            ),
            lp,
        ).values
        stats = column_stats(work_train)
    else:
        lp = None
        work_train = train_m
        va_work = va_vals
        stats = raw_stats

    std_train = standardize(work_train, stats)
    model = _fit_training_model(
        std_train.values, std_train.mask, cfg.estimator_policy, cfg.em,
        std_train.model_names, names,
    )
    Sigma = model.cov
    n_act = len(active)
    va_std = (va_work - stats.means) / stats.stds

    fold_cells: list[CvCell] = []
    fold_orders: dict = {}
    for method in cfg.methods:
        k_cap = min(cfg.k_max, n_act if method != "mi" else n_act - 1)
        if method == "entropy":
            order = list(greedy_entropy(Sigma, k_cap).order)
        elif method == "mi":
            order = list(greedy_mi(Sigma, k_cap).order)
        else:
            rng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, 2, pk, fold_idx])
            )
            order = [int(j) for j in rng.permutation(n_act)[:k_cap]]
        fold_orders[(method, p, fold_idx)] = tuple(names[j] for j in order)

        total_var = float(np.trace(Sigma))
        for k in range(1, len(order) + 1):
            A = order[:k]
            preds: list[float] = []
            targets: list[float] = []
            sel = set(A)
            for i in range(va_vals.shape[0]):
                obs_cols = np.flatnonzero(va_mask[i])
                obs = {int(j): float(va_std[i, j]) for j in obs_cols}
                target_cols = [j for j in obs_cols if j not in sel]
                if not target_cols:
                    continue
                res = impute_row(
                    obs, A, model, ridge=cfg.ridge, targets=target_cols
                )
                for j in target_cols:
                    if cfg.logit_mode:
                        # invert: standardized logit -> logit -> raw, then
                        # score both sides in raw standardized space
                        f = res.predicted[j] * stats.stds[j] + stats.means[j]
                        raw_pred = (1.0 / (1.0 + math.exp(-f))) * lp.col_max[j]
                        pred_z = (raw_pred - raw_stats.means[j]) / raw_stats.stds[j]
                        target_z = (va_vals[i, j] - raw_stats.means[j]) / raw_stats.stds[j]
                    else:
                        pred_z = res.predicted[j]
                        target_z = va_std[i, j]
                    preds.append(pred_z)
                    targets.append(clip_standardized(target_z))
            r2 = (
                r2_standardized(preds, targets) if targets else math.nan
            )
            try:
                ent = entropy_value(Sigma, A)
            except Exception:
                ent = math.nan
            rfrac = residual_trace(Sigma, A, psd_floor=1e-10) / total_var
            fold_cells.append(
                CvCell(
                    method, p, fold_idx, k, r2, float(rfrac), float(ent),
                    float(mi_value(Sigma, A)),
                )
            )
    return fold_cells, fold_orders


def compare_methods(report: CvReport) -> list[dict]:
    """Per (holdout_p, k): mean/std R^2 per method plus pairwise differences."""
    methods = sorted({c.method for c in report.cells})
    if len(methods) < 2:
        raise DataError("comparison requires at least 2 methods")
    keys = sorted({(c.holdout_p, c.k) for c in report.cells})
    rows = []
    for p, k in keys:
        row: dict = {"holdout_p": p, "k": k}
        means = {}
        for method in methods:
            s = report.summary.get((method, p, k))
            if s is None:
                raise DataError(f"method {method!r} missing at p={p}, k={k}")
            row[f"{method}_mean"] = s["mean"]
            row[f"{method}_std"] = s["std"]
            means[method] = s["mean"]
        for a_i, a in enumerate(methods):
            for b in methods[a_i + 1:]:
                row[f"{a}_minus_{b}"] = means[a] - means[b]
        rows.append(row)
    return rows
