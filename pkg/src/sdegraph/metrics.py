"""Structure-recovery metrics over scored adjacency matrices."""

from __future__ import annotations

import numpy as np

from .errors import MetricError, ParseError
from .model import Graph


def _flatten(scores, truth, mask):
    scores = np.asarray(scores, dtype=np.float64)
    truth_adj = truth.adjacency if isinstance(truth, Graph) else np.asarray(truth)
    if scores.shape != truth_adj.shape:
        raise MetricError(f"score shape {scores.shape} != truth shape {truth_adj.shape}")
    if mask is None:
        mask = np.ones(scores.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    if not np.all(np.isfinite(scores[mask])):
        raise MetricError("scores contain non-finite values")
    return scores[mask], truth_adj[mask].astype(int)


def exclude_diagonal_mask(dim) -> np.ndarray:
    return ~np.eye(dim, dtype=bool)


def auroc(scores, truth, mask=None) -> float:
    """Probability a random true edge outscores a random non-edge; ties count half.

    Computed with the rank (Mann-Whitney) formulation using average ranks.
    """
    s, y = _flatten(scores, truth, mask)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC undefined: need at least one edge and one non-edge")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    ranks[order] = np.arange(1, len(s) + 1)
    sorted_s = s[order]
    i = 0
    while i < len(sorted_s):
        j = i
        while j + 1 < len(sorted_s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1_tpr_fdr(scores, truth, threshold=0.5, mask=None):
    """Binarize at ``score > threshold`` and report (F1, TPR, FDR).

    FDR is 0 by convention when nothing is predicted positive.
    """
    s, y = _flatten(scores, truth, mask)
    if y.sum() == 0 or y.sum() == len(y):
        raise MetricError("metrics undefined: need at least one edge and one non-edge")
    pred = (s > threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    tpr = tp / (tp + fn)
    fdr = fp / (fp + tp) if (fp + tp) > 0 else 0.0
    return float(f1), float(tpr), float(fdr)


def write_metrics_report(path, metrics: dict):
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in metrics.items():
            fh.write(f"{k} {repr(float(v)) if isinstance(v, float) else v}\n")


def read_metrics_report(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(" ", 1)
            if len(parts) != 2:
                raise ParseError("expected 'name value' lines", line=lineno)
            try:
                out[parts[0]] = float(parts[1])
            except ValueError:
                out[parts[0]] = parts[1]
    return out
