"""Binary-classification evaluation with the feasible class as positive.

Metrics with a zero denominator are reported as ``None`` (undefined), never
silently as zero.  Curves group tied scores at a single threshold; area is
the trapezoidal rule over the curve's abscissa.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


@dataclass
class Curve:
    points: list[tuple[float, float]]
    auc: float

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def confusion(y_true, y_pred) -> ConfusionMatrix:
    yt = np.asarray(y_true, dtype=int).ravel()
    yp = np.asarray(y_pred, dtype=int).ravel()
    if yt.size != yp.size:
        raise MetricsError(f"length mismatch: {yt.size} labels vs {yp.size} predictions")
    if yt.size == 0:
        raise MetricsError("need at least one sample")
    return ConfusionMatrix(
        tp=int(np.sum((yt == 1) & (yp == 1))),
        fn=int(np.sum((yt == 1) & (yp == 0))),
        fp=int(np.sum((yt == 0) & (yp == 1))),
        tn=int(np.sum((yt == 0) & (yp == 0))),
    )


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def f1_score(p: float | None, r: float | None) -> float | None:
    """Harmonic mean of precision and recall; undefined when either is."""
    if p is None or r is None or p + r == 0.0:
        return None
    return 2.0 * p * r / (p + r)


def scalar_metrics(cm: ConfusionMatrix) -> dict[str, float | None]:
    """Accuracy, precision, recall, TPR, FPR and F1 (TPR is recall by definition)."""
    p = _ratio(cm.tp, cm.tp + cm.fp)
    r = _ratio(cm.tp, cm.tp + cm.fn)
    return {
        "accuracy": _ratio(cm.tp + cm.tn, cm.total),
        "precision": p,
        "recall": r,
        "tpr": r,
        "fpr": _ratio(cm.fp, cm.fp + cm.tn),
        "f1": f1_score(p, r),
    }


def _sweep(y_true, scores) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Cumulative TP/FP counts at each distinct score threshold (descending)."""
    yt = np.asarray(y_true, dtype=int).ravel()
    sc = np.asarray(scores, dtype=float).ravel()
    if yt.size != sc.size:
        raise MetricsError(f"length mismatch: {yt.size} labels vs {sc.size} scores")
    if yt.size == 0:
        raise MetricsError("need at least one sample")
    order = np.argsort(-sc, kind="stable")
    yt = yt[order]
    sc = sc[order]
    distinct = np.flatnonzero(np.diff(sc)) if sc.size > 1 else np.array([], dtype=int)
    ends = np.append(distinct, sc.size - 1)  # inclusive index where each tie group ends
    cum_tp = np.cumsum(yt == 1)[ends]
    cum_fp = np.cumsum(yt == 0)[ends]
    return cum_tp, cum_fp, int(np.sum(yt == 1)), int(np.sum(yt == 0))


def _trapezoid(xs: np.ndarray, ys: np.ndarray) -> float:
    return float(np.sum(np.diff(xs) * (ys[:-1] + ys[1:]) / 2.0))


def roc_curve(y_true, scores) -> Curve:
    """Operating-characteristic points from (0,0) to (1,1); area by trapezoid.

    Requires both classes; a single-class truth leaves one axis undefined.
    """
    cum_tp, cum_fp, n_pos, n_neg = _sweep(y_true, scores)
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC needs both classes present")
    fpr = np.concatenate([[0.0], cum_fp / n_neg])
    tpr = np.concatenate([[0.0], cum_tp / n_pos])
    points = list(zip(fpr.tolist(), tpr.tolist()))
    return Curve(points=points, auc=_trapezoid(fpr, tpr))


def pr_curve(y_true, scores) -> Curve:
    """Precision-recall points; the zero-recall anchor reuses the precision
    of the highest-score tie group.  With no positive samples the recall axis
    is vacuously zero."""
    cum_tp, cum_fp, n_pos, _ = _sweep(y_true, scores)
    precision = cum_tp / (cum_tp + cum_fp)
    recall = cum_tp / n_pos if n_pos > 0 else np.zeros_like(precision)
    rs = np.concatenate([[0.0], recall])
    ps = np.concatenate([[precision[0]], precision])
    points = list(zip(rs.tolist(), ps.tolist()))
    return Curve(points=points, auc=_trapezoid(rs, ps))


def curve_to_csv(curve: Curve, x_name: str, y_name: str) -> str:
    lines = [f"{x_name},{y_name}"]
    for x, y in curve.points:
        lines.append(f"{x!r},{y!r}")
    return "\n".join(lines) + "\n"


def format_report(metrics: dict[str, float | None], extra: dict | None = None) -> str:
    """Flat ``key: value`` text; floats shown at 4 decimals, undefined as-is."""
    lines = []
    for key, val in {**metrics, **(extra or {})}.items():
        if val is None:
            lines.append(f"{key}: undefined")
        elif isinstance(val, float):
            lines.append(f"{key}: {val:.4f}")
        else:
            lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"
