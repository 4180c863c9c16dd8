"""Inference-time prediction, uncertainty aggregation, and evaluation metrics.

Known-class scoring uses F1 of the binary "no label at all" decision
(f1_normal) and an importance-weighted macro F-beta with beta=2 (f2_ciw).
Unknown detection treats unknown samples as the positive class and ranks
by aggregated per-class uncertainty; auroc / aupr / fpr_at_95_tpr plus
two baseline scorers cover that task. All metric functions are pure and
permutation-invariant over samples.
"""

from __future__ import annotations

import csv
import math
import re
import warnings
from dataclasses import dataclass

import numpy as np
import yaml

from .base_rates import CIWTable
from .errors import ConfigError
from .opinions import (
    DEFAULT_PRIOR_WEIGHT,
    BaseRatePair,
    EvidencePair,
    dirichlet_from_evidence,
    expected_probability,
)

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class AggregationMode:
    """How per-class uncertainties collapse to one score: max, sum, or topm."""

    kind: str
    m: int = 1

    def __post_init__(self):
        if self.kind not in ("max", "sum", "topm"):
            raise ConfigError(f"unknown aggregation kind {self.kind!r}")
        if self.m < 1:
            raise ConfigError(f"aggregation m must be >= 1, got {self.m}")

    def __str__(self) -> str:
        return f"top{self.m}" if self.kind == "topm" else self.kind


MAX_AGGREGATION = AggregationMode("max")


def parse_aggregation(text: str) -> AggregationMode:
    """Parse an aggregation flag: 'max', 'sum', or 'topN' (e.g. 'top5')."""
    lowered = text.strip().lower()
    if lowered in ("max", "sum"):
        return AggregationMode(lowered)
    m = re.fullmatch(r"top(\d+)", lowered)
    if m:
        return AggregationMode("topm", int(m.group(1)))
    raise ConfigError(f"unknown aggregation {text!r} (expected max, sum, or topN)")


def aggregate_uncertainty(uncertainties, mode: AggregationMode) -> float:
    u = np.asarray(uncertainties, dtype=np.float64)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("uncertainties must be a non-empty vector")
    return float(_aggregate_rows(u[None, :], mode)[0])


def _aggregate_rows(u: np.ndarray, mode: AggregationMode) -> np.ndarray:
    if mode.kind == "max":
        return u.max(axis=1)
    if mode.kind == "sum":
        return u.sum(axis=1)
    m = min(mode.m, u.shape[1])
    part = np.partition(u, u.shape[1] - m, axis=1)
    return part[:, u.shape[1] - m:].sum(axis=1)


@dataclass(frozen=True)
class Prediction:
    probabilities: tuple[float, ...]
    uncertainties: tuple[float, ...]
    uncertainty: float
    labels: tuple[bool, ...]


@dataclass(frozen=True)
class BatchPrediction:
    probabilities: np.ndarray
    uncertainties: np.ndarray
    uncertainty: np.ndarray
    labels: np.ndarray


def predict(
    evidences,
    base,
    prior_weight: float = DEFAULT_PRIOR_WEIGHT,
    threshold: float = DEFAULT_THRESHOLD,
    agg: AggregationMode = MAX_AGGREGATION,
) -> Prediction:
    """Per-class expected probability and vacuity for one sample.

    evidences and base are parallel sequences of EvidencePair and
    BaseRatePair; a class is labeled present iff its positive probability
    exceeds the threshold.
    """
    evidences = tuple(evidences)
    base = tuple(base)
    if len(evidences) != len(base) or not evidences:
        raise ValueError("need one base-rate pair per class and at least one class")
    probs, uncs = [], []
    for e, a in zip(evidences, base):
        d = dirichlet_from_evidence(e, a, prior_weight)
        probs.append(expected_probability(d)[0])
        uncs.append(prior_weight / d.strength)
    return Prediction(
        probabilities=tuple(probs),
        uncertainties=tuple(uncs),
        uncertainty=aggregate_uncertainty(uncs, agg),
        labels=tuple(p > threshold for p in probs),
    )


def predict_batch(
    evidence: np.ndarray,
    a_pos: np.ndarray,
    a_neg: np.ndarray,
    prior_weight: float = DEFAULT_PRIOR_WEIGHT,
    threshold: float = DEFAULT_THRESHOLD,
    agg: AggregationMode = MAX_AGGREGATION,
) -> BatchPrediction:
    """Vectorized predict over an (N, K, 2) evidence array."""
    ev = np.asarray(evidence, dtype=np.float64)
    a_pos = np.asarray(a_pos, dtype=np.float64)
    a_neg = np.asarray(a_neg, dtype=np.float64)
    if ev.ndim != 3 or ev.shape[2] != 2 or ev.shape[1] != a_pos.shape[0]:
        raise ValueError(f"evidence shape {ev.shape} does not match {a_pos.shape[0]} classes")
    if (ev < 0).any() or not np.isfinite(ev).all():
        raise ValueError("evidence must be finite and non-negative")
    strength = ev[:, :, 0] + ev[:, :, 1] + prior_weight
    probs = (ev[:, :, 0] + a_pos * prior_weight) / strength
    uncs = prior_weight / strength
    return BatchPrediction(
        probabilities=probs,
        uncertainties=uncs,
        uncertainty=_aggregate_rows(uncs, agg),
        labels=probs > threshold,
    )


def _as_label_matrix(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2:
        raise ValueError(f"expected an (N, K) label matrix, got shape {m.shape}")
    return m.astype(bool)


def f1_normal(pred_labels, true_labels) -> float:
    """F1 of the binary "no label" decision; normal is the positive class.

    A zero denominator is defined as 0.0 and emits a warning.
    """
    pred = _as_label_matrix(pred_labels)
    true = _as_label_matrix(true_labels)
    if pred.shape != true.shape or pred.shape[0] == 0:
        raise ValueError("prediction and truth must be non-empty and the same shape")
    pred_normal = ~pred.any(axis=1)
    true_normal = ~true.any(axis=1)
    tp = int(np.sum(pred_normal & true_normal))
    fp = int(np.sum(pred_normal & ~true_normal))
    fn = int(np.sum(~pred_normal & true_normal))
    denom = 2 * tp + fp + fn
    if denom == 0:
        warnings.warn("f1_normal undefined (no normal samples predicted or present); using 0.0")
        return 0.0
    return 2.0 * tp / denom


def _fbeta(precision: float, recall: float, beta: float = 2.0) -> float:
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * precision * recall / denom


def per_class_f2(pred_labels, true_labels):
    """Per-class (precision, recall, F2) rows.

    A class absent from both truth and predictions counts as vacuously
    perfect (1.0, 1.0, 1.0), so flawless predictions score 1.0 whether or
    not every class occurs.
    """
    pred = _as_label_matrix(pred_labels)
    true = _as_label_matrix(true_labels)
    if pred.shape != true.shape or pred.shape[0] == 0:
        raise ValueError("prediction and truth must be non-empty and the same shape")
    rows = []
    for k in range(pred.shape[1]):
        tp = int(np.sum(pred[:, k] & true[:, k]))
        fp = int(np.sum(pred[:, k] & ~true[:, k]))
        fn = int(np.sum(~pred[:, k] & true[:, k]))
        if tp + fp + fn == 0:
            rows.append((1.0, 1.0, 1.0))
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        rows.append((precision, recall, _fbeta(precision, recall)))
    return rows


def f2_ciw(pred_labels, true_labels, ciw: CIWTable) -> float:
    """Importance-weighted macro F2: sum_k w_k F2_k / sum_k w_k.

    With uniform weights this equals the plain macro F2 exactly.
    """
    pred = _as_label_matrix(pred_labels)
    if pred.shape[1] != len(ciw):
        raise ConfigError(
            f"CIW table has {len(ciw)} classes but labels have {pred.shape[1]}"
        )
    weights = np.asarray(ciw.weights, dtype=np.float64)
    total = float(weights.sum())
    if total <= 0.0:
        raise ConfigError("CIW weights must sum to a positive value")
    rows = per_class_f2(pred_labels, true_labels)
    f2s = np.array([r[2] for r in rows])
    return float(np.dot(weights, f2s) / total)


def _check_scores(scores, labels, need_pos=True, need_neg=True):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.ndim != 1 or s.shape != y.shape or s.size == 0:
        raise ValueError("scores and labels must be matching non-empty vectors")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    n_pos = int(y.sum())
    n_neg = int(s.size - n_pos)
    if need_pos and n_pos == 0:
        raise ValueError("metric undefined: no positive (unknown) samples")
    if need_neg and n_neg == 0:
        raise ValueError("metric undefined: no negative (known) samples")
    return s, y, n_pos, n_neg


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    boundaries = np.flatnonzero(np.r_[True, sx[1:] != sx[:-1], True])
    ranks = np.empty(x.size, dtype=np.float64)
    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        ranks[order[start:stop]] = 0.5 * (start + stop + 1)
    return ranks


def auroc(scores, labels) -> float:
    """Probability a random positive outranks a random negative, ties at 1/2.

    Mann-Whitney rank statistic; scores are oriented so higher means more
    likely unknown and labels mark the unknown (positive) samples.
    """
    s, y, n_pos, n_neg = _check_scores(scores, labels)
    ranks = _average_ranks(s)
    rank_sum = float(ranks[y].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def aupr(scores, labels) -> float:
    """Area under precision-recall with precision right-constant in recall."""
    s, y, n_pos, _ = _check_scores(scores, labels, need_neg=False)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = fp = 0
    prev_recall = 0.0
    area = 0.0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i:j].sum())
        fp += (j - i) - int(y_sorted[i:j].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return area


def fpr_at_95_tpr(scores, labels, tpr_target: float = 0.95) -> float:
    """Smallest false-positive rate among thresholds reaching the TPR target.

    Thresholds sweep the midpoints of consecutive distinct scores plus
    -inf and +inf sentinels; a sample is flagged unknown when its score
    exceeds the threshold.
    """
    s, y, n_pos, n_neg = _check_scores(scores, labels)
    distinct = np.unique(s)
    midpoints = 0.5 * (distinct[:-1] + distinct[1:])
    thresholds = np.concatenate(([-np.inf], midpoints, [np.inf]))
    best = 1.0
    found = False
    for t in thresholds:
        flagged = s > t
        tpr = float(np.sum(flagged & y)) / n_pos
        if tpr >= tpr_target:
            fpr = float(np.sum(flagged & ~y)) / n_neg
            if not found or fpr < best:
                best, found = fpr, True
    return best


def baseline_ood_scores(logits, method: str) -> np.ndarray:
    """Unknown-ness scores from raw per-class logits; higher = more unknown.

    MaxLogit: -max_k logit_k. JointEnergy: -sum_k log(1 + exp(logit_k)).
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] == 0:
        raise ValueError(f"expected (N, K) logits, got shape {np.asarray(logits).shape}")
    name = method.strip().lower()
    if name == "maxlogit":
        out = -z.max(axis=1)
    elif name == "jointenergy":
        out = -np.logaddexp(0.0, z).sum(axis=1)
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    return out[0] if single else out


@dataclass(frozen=True)
class MetricsReport:
    """Metric values for one evaluation; fields not computed stay None."""

    f1_normal: float | None = None
    f2_ciw: float | None = None
    auroc: float | None = None
    aupr: float | None = None
    fpr95: float | None = None
    num_known: int = 0
    num_unknown: int = 0
    per_class: tuple[tuple[str, float, float, float, float], ...] = ()

    def __post_init__(self):
        for name in ("f1_normal", "f2_ciw", "auroc", "aupr", "fpr95"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.num_known < 0 or self.num_unknown < 0:
            raise ValueError("sample counts must be >= 0")


_METRIC_FIELDS = ("f1_normal", "f2_ciw", "auroc", "aupr", "fpr95")


def render_report(report: MetricsReport, task: str, config: dict | None = None) -> str:
    """Serialize a report (plus the run's resolved config) as YAML text."""
    metrics = {
        name: getattr(report, name)
        for name in _METRIC_FIELDS
        if getattr(report, name) is not None
    }
    doc = {
        "task": task,
        "config": dict(config or {}),
        "counts": {"known": report.num_known, "unknown": report.num_unknown},
        "metrics": metrics,
    }
    if report.per_class:
        doc["per_class"] = {
            name: {"precision": p, "recall": r, "f2": f2, "weight": w}
            for name, p, r, f2, w in report.per_class
        }
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)


def parse_report(text: str) -> tuple[MetricsReport, str, dict]:
    """Inverse of render_report: returns (report, task, config)."""
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or "metrics" not in doc or "counts" not in doc:
        raise ValueError("not a metrics report document")
    metrics = doc["metrics"]
    per_class = tuple(
        sorted(
            (name, row["precision"], row["recall"], row["f2"], row["weight"])
            for name, row in doc.get("per_class", {}).items()
        )
    )
    report = MetricsReport(
        f1_normal=metrics.get("f1_normal"),
        f2_ciw=metrics.get("f2_ciw"),
        auroc=metrics.get("auroc"),
        aupr=metrics.get("aupr"),
        fpr95=metrics.get("fpr95"),
        num_known=doc["counts"]["known"],
        num_unknown=doc["counts"]["unknown"],
        per_class=per_class,
    )
    return report, doc.get("task", ""), doc.get("config", {})


def write_scores_csv(path, ids, uncertainties, flags) -> None:
    """Per-sample score table: sample_id, uncertainty, is_unknown."""
    ids = list(ids)
    u = np.asarray(uncertainties, dtype=np.float64)
    f = np.asarray(flags).astype(bool)
    if len(ids) != u.size or u.size != f.size:
        raise ValueError("ids, uncertainties, and flags must have equal length")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "uncertainty", "is_unknown"])
        for sid, unc, flag in zip(ids, u, f):
            writer.writerow([sid, repr(float(unc)), int(flag)])
