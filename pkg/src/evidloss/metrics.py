"""Evaluation metrics (IoU, ECE, AUROC, AUPR, FPR95) and the misclassification/OOD protocol."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ROLE_ID = "ID"
ROLE_PSEUDO_OOD = "pseudo-OOD"
ROLE_TRUE_OOD = "true-OOD"


@dataclass(frozen=True)
class MetricsReport:
    """Segmentation, calibration, and detection metrics over one test split.

    Misclassification metrics are None when the split yields only correct (or
    only incorrect) ID predictions, since a ranking metric is undefined there.
    """

    iou: float
    ece: float
    mis_auroc: float | None
    mis_aupr: float | None
    mis_fpr95: float | None
    ood_auroc: float
    ood_aupr: float
    ood_fpr95: float
    counts: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "iou": self.iou,
            "ece": self.ece,
            "mis_auroc": self.mis_auroc,
            "mis_aupr": self.mis_aupr,
            "mis_fpr95": self.mis_fpr95,
            "ood_auroc": self.ood_auroc,
            "ood_aupr": self.ood_aupr,
            "ood_fpr95": self.ood_fpr95,
            "counts": self.counts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


def ece(confidences: Sequence[float], correct: Sequence[bool], n_bins: int = 10) -> float:
    """Expected calibration error with equal-width bins, right-closed on (0, 1]."""
    conf = np.asarray(confidences, dtype=float)
    corr = np.asarray(correct, dtype=bool)
    if conf.shape != corr.shape or conf.ndim != 1:
        raise ValueError("confidences and correctness flags must be equal-length 1-D sequences")
    if conf.size == 0:
        raise ValueError("empty input")
    if n_bins < 1:
        raise ValueError("need at least one bin")
    if np.any(conf < 0.0) or np.any(conf > 1.0):
        raise ValueError("confidences must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    # right-closed bins; searchsorted(left) sends a value equal to an edge down,
    # and the first bin absorbs confidence 0
    idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, n_bins - 1)
    total = 0.0
    n = conf.size
    for b in range(n_bins):
        mask = idx == b
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        acc = corr[mask].mean()
        avg_conf = conf[mask].mean()
        total += cnt / n * abs(acc - avg_conf)
    return float(total)


def _check_binary(scores: Sequence[float], labels: Sequence[bool]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1 or s.size == 0:
        raise ValueError("scores and labels must be equal-length nonempty 1-D sequences")
    return s, y


def auroc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability a random positive outscores a random negative, ties counted 1/2."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=float)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _threshold_counts(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # cumulative true/false positives at each distinct threshold, descending
    order = np.argsort(-scores, kind="mergesort")
    s_sorted = scores[order]
    y_sorted = labels[order]
    distinct = np.nonzero(np.diff(s_sorted))[0]
    last = np.concatenate([distinct, [s_sorted.size - 1]])
    tp = np.cumsum(y_sorted)[last]
    fp = np.cumsum(~y_sorted)[last]
    return tp, fp


def aupr(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Area under precision-recall by step summation over distinct thresholds."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("need at least one positive")
    tp, fp = _threshold_counts(s, y)
    area = 0.0
    prev_recall = 0.0
    for t, f in zip(tp.tolist(), fp.tolist()):
        recall = t / n_pos
        precision = t / (t + f)
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return float(area)


def fpr_at_95_tpr(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """False-positive rate at the first threshold (high to low) reaching TPR >= 0.95."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative")
    tp, fp = _threshold_counts(s, y)
    for t, f in zip(tp.tolist(), fp.tolist()):
        if t / n_pos >= 0.95:
            return float(f / n_neg)
    return 1.0


def iou(predicted_positive: Sequence[bool], true_positive: Sequence[bool]) -> float:
    """Intersection over union of two masks; 1 when the union is empty."""
    pred = np.asarray(predicted_positive, dtype=bool)
    true = np.asarray(true_positive, dtype=bool)
    if pred.shape != true.shape:
        raise ValueError("mask length mismatch")
    inter = int((pred & true).sum())
    union = int((pred | true).sum())
    if union == 0:
        return 1.0
    return inter / union


SCORERS = ("evidential", "energy", "entropy")


def evaluate(model, split, scorer: str = "evidential", positive_class: int = 0) -> MetricsReport:
    """Score a test split: IoU/ECE/misclassification on ID points, OOD detection on ID vs true-OOD.

    The scorer picks both the class-probability head (Dirichlet mean for
    "evidential", softmax otherwise) and the epistemic score used for OOD
    ranking. OOD points are excluded from the ID-only metrics.
    """
    if scorer not in SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}; choose from {SCORERS}")
    test = list(split.test)
    if not test:
        raise ValueError("test split is empty")
    x = np.asarray([p.x for p in test], dtype=float)
    roles = np.asarray([p.role for p in test])
    labels = np.asarray([p.label for p in test], dtype=int)
    preds = model.predict_uncertainties_batch(x)

    if scorer == "evidential":
        probs = preds["p_bar"]
        ood_scores = preds["u_epis"]
    elif scorer == "energy":
        probs = preds["p_softmax"]
        ood_scores = preds["energy"]
    else:
        probs = preds["p_softmax"]
        ood_scores = preds["softmax_entropy"]
    u_alea = -probs.max(axis=1)

    id_mask = roles == ROLE_ID
    ood_mask = roles == ROLE_TRUE_OOD
    n_id = int(id_mask.sum())
    n_ood = int(ood_mask.sum())
    if n_id == 0:
        raise ValueError("test split has no ID points")
    if n_ood == 0:
        raise ValueError("test split has no true-OOD points for the OOD task")

    pred_class = probs[id_mask].argmax(axis=1)
    true_class = labels[id_mask]
    correct = pred_class == true_class
    iou_val = iou(pred_class == positive_class, true_class == positive_class)
    ece_val = ece(probs[id_mask].max(axis=1), correct, n_bins=10)

    misclassified = ~correct
    if misclassified.any() and correct.any():
        mis_scores = u_alea[id_mask]
        mis_auroc = auroc(mis_scores, misclassified)
        mis_aupr = aupr(mis_scores, misclassified)
        mis_fpr95 = fpr_at_95_tpr(mis_scores, misclassified)
    else:
        mis_auroc = mis_aupr = mis_fpr95 = None

    det_mask = id_mask | ood_mask
    ood_labels = ood_mask[det_mask]
    ood_vals = ood_scores[det_mask]
    return MetricsReport(
        iou=iou_val,
        ece=ece_val,
        mis_auroc=mis_auroc,
        mis_aupr=mis_aupr,
        mis_fpr95=mis_fpr95,
        ood_auroc=auroc(ood_vals, ood_labels),
        ood_aupr=aupr(ood_vals, ood_labels),
        ood_fpr95=fpr_at_95_tpr(ood_vals, ood_labels),
        counts={
            "n_id": n_id,
            "n_true_ood": n_ood,
            "n_misclassified": int(misclassified.sum()),
        },
    )
