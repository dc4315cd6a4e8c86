"""IoU, NMS, greedy matching, AP/mAP and confusion matrices over raster boxes.

Inputs are per-frame lists: ``dets[i]`` holds the detections of frame ``i``
and ``gts[i]`` its ground-truth boxes. IoU is computed in pixel units of the
padded raster.

Conventions:
  * AP uses all-point interpolation (area under the precision envelope);
    ``interpolation="coco101"`` switches to 101 recall points.
  * Scalar precision/recall per class are read at the confidence cut that
    maximises F1 at IoU 0.5.
  * The confusion matrix is indexed ``[predicted, true]`` with background
    as the last row/column; normalization divides each column by its sum.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import DEFAULT_CONFIG, NUM_CLASSES, EncodingConfig, InvalidArgument, ObjectClass
from .labels import RasterBox

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))


@dataclass(frozen=True)
class Detection:
    box: RasterBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidArgument(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def cls(self) -> ObjectClass:
        return self.box.cls


def iou(a: RasterBox, b: RasterBox, cfg: EncodingConfig = DEFAULT_CONFIG) -> float:
    ax1, ay1, ax2, ay2 = a.to_pixels(cfg)
    bx1, by1, bx2, by2 = b.to_pixels(cfg)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(boxes_a, boxes_b, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Pairwise IoU, shape ``(len(boxes_a), len(boxes_b))``."""
    a = np.array([x.to_pixels(cfg) for x in boxes_a], dtype=float).reshape(-1, 4)
    b = np.array([x.to_pixels(cfg) for x in boxes_b], dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


def _by_confidence(dets) -> list:
    # stable: equal confidences keep input order
    return sorted(dets, key=lambda d: -d.confidence)


def nms(dets, iou_thr: float = 0.45, cfg: EncodingConfig = DEFAULT_CONFIG) -> list[Detection]:
    """Greedy per-class suppression; a detection survives only if its IoU with
    every kept detection of its class is below ``iou_thr``."""
    kept: list[Detection] = []
    for d in _by_confidence(dets):
        if all(k.cls != d.cls or iou(k.box, d.box, cfg) < iou_thr for k in kept):
            kept.append(d)
    return kept


def match_greedy(dets, gts, iou_thr: float, cfg: EncodingConfig = DEFAULT_CONFIG) -> list[tuple[Detection, int | None]]:
    """Assign each detection (highest confidence first) to the unmatched
    same-class ground truth with the largest IoU >= ``iou_thr``.

    Returns ``(detection, gt_index)`` pairs, ``None`` for false positives.
    """
    dets = _by_confidence(dets)
    gts = list(gts)
    if not dets:
        return []
    ious = iou_matrix([d.box for d in dets], gts, cfg)
    taken = np.zeros(len(gts), dtype=bool)
    out = []
    for i, d in enumerate(dets):
        best, best_iou = None, iou_thr
        for j, g in enumerate(gts):
            if taken[j] or g.cls != d.cls:
                continue
            if ious[i, j] >= best_iou and (best is None or ious[i, j] > best_iou):
                best, best_iou = j, ious[i, j]
        if best is not None:
            taken[best] = True
        out.append((d, best))
    return out


def pr_points(tp, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall after each detection of a confidence-ranked list."""
    tp = np.asarray(tp, dtype=float)
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, len(tp) + 1)
    recall = ctp / n_gt if n_gt > 0 else np.zeros_like(ctp)
    return precision, recall


def average_precision(tp, n_gt: int, interpolation: str = "all") -> float | None:
    """AP of a confidence-ranked list of true/false-positive flags.

    Returns ``None`` when there is nothing to score (no ground truth and no
    detections) and 0 when there are detections but no ground truth.
    """
    tp = np.asarray(tp, dtype=bool)
    if n_gt < 0:
        raise InvalidArgument("n_gt must be >= 0")
    if n_gt == 0:
        return None if len(tp) == 0 else 0.0
    if len(tp) == 0:
        return 0.0
    precision, recall = pr_points(tp, n_gt)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[1.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    if interpolation == "all":
        i = np.nonzero(mrec[1:] != mrec[:-1])[0]
        return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))
    if interpolation == "coco101":
        r = np.linspace(0.0, 1.0, 101)
        idx = np.searchsorted(recall, r, side="left")
        env = mpre[1:-1]
        vals = np.where(idx < len(env), env[np.minimum(idx, len(env) - 1)], 0.0)
        return float(vals.mean())
    raise InvalidArgument(f"unknown interpolation {interpolation!r}")


def _ranked_flags(dets_per_frame, gts_per_frame, klass, iou_thr, cfg):
    """Confidence-ranked ``(confidences, tp flags)`` for one class, plus its GT count."""
    confs, flags, n_gt = [], [], 0
    for dets, gts in zip(dets_per_frame, gts_per_frame):
        gts_c = [g for g in gts if g.cls == klass]
        dets_c = [d for d in dets if d.cls == klass]
        n_gt += len(gts_c)
        for d, g in match_greedy(dets_c, gts_c, iou_thr, cfg):
            confs.append(d.confidence)
            flags.append(g is not None)
    order = np.argsort(-np.asarray(confs, dtype=float), kind="stable")
    return np.asarray(confs, dtype=float)[order], np.asarray(flags, dtype=bool)[order], n_gt


def _max_f1_point(confs, tp, n_gt):
    """``(precision, recall, confidence)`` at the F1-maximising confidence cut."""
    if n_gt == 0:
        return (0.0 if len(tp) else None), None, None
    if len(tp) == 0:
        return 0.0, 0.0, None
    precision, recall = pr_points(tp, n_gt)
    # only cut between distinct confidences
    ends = np.nonzero(np.append(confs[1:] < confs[:-1], True))[0]
    p, r = precision[ends], recall[ends]
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
    k = int(np.argmax(f1))
    return float(p[k]), float(r[k]), float(confs[ends[k]])


@dataclass
class ClassMetrics:
    n_gt: int
    n_det: int
    precision: float | None
    recall: float | None
    ap50: float | None
    ap50_95: float | None
    f1_confidence: float | None = None


@dataclass
class EvalReport:
    per_class: dict[str, ClassMetrics]
    map50: float
    map50_95: float
    precision: float
    recall: float
    confusion: list[list[int]]
    iou_thresholds: tuple[float, ...] = IOU_THRESHOLDS
    interpolation: str = "all"
    pr_curves: dict[str, dict[str, list[float]]] = field(default_factory=dict)

    def confusion_normalized(self) -> np.ndarray:
        return normalize_confusion(np.asarray(self.confusion, dtype=float))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["iou_thresholds"] = list(self.iou_thresholds)
        d["classes"] = [c.label for c in ObjectClass] + ["background"]
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d.pop("classes", None)
        d["per_class"] = {k: ClassMetrics(**v) for k, v in d["per_class"].items()}
        d["iou_thresholds"] = tuple(d["iou_thresholds"])
        return cls(**d)

    def to_table(self) -> str:
        """Plain-text table: Class, Precision, Recall, mAP@0.5, mAP@0.5:0.95."""

        def f(x):
            return "   -  " if x is None else f"{x:6.3f}"

        lines = [f"{'Class':<12}{'Precision':>11}{'Recall':>9}{'mAP@0.5':>10}{'mAP@0.5:0.95':>14}"]
        for name, m in self.per_class.items():
            lines.append(f"{name.capitalize():<12}{f(m.precision):>11}{f(m.recall):>9}{f(m.ap50):>10}{f(m.ap50_95):>14}")
        lines.append(
            f"{'All (mean)':<12}{f(self.precision):>11}{f(self.recall):>9}{f(self.map50):>10}{f(self.map50_95):>14}"
        )
        return "\n".join(lines)

    def pr_curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "confidence", "precision", "recall"])
        for name, curve in self.pr_curves.items():
            for c, p, r in zip(curve["confidence"], curve["precision"], curve["recall"]):
                w.writerow([name, f"{c:.6f}", f"{p:.6f}", f"{r:.6f}"])
        return buf.getvalue()


def _mean(values) -> float:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else 0.0


def evaluate(
    dets_per_frame,
    gts_per_frame,
    thresholds=IOU_THRESHOLDS,
    interpolation: str = "all",
    conf_thr: float = 0.25,
    cfg: EncodingConfig = DEFAULT_CONFIG,
) -> EvalReport:
    """Per-class AP at each IoU threshold, mAP@0.5 and mAP@0.5:0.95.

    mAP@0.5:0.95 averages each class over ``thresholds`` first, then over
    classes. Classes with neither ground truth nor detections are left out
    of the means.
    """
    dets_per_frame = [list(d) for d in dets_per_frame]
    gts_per_frame = [list(g) for g in gts_per_frame]
    if len(dets_per_frame) != len(gts_per_frame):
        raise InvalidArgument("need one detection list per ground-truth frame")
    thresholds = tuple(thresholds)
    per_class, curves = {}, {}
    for klass in ObjectClass:
        confs, tp, n_gt = _ranked_flags(dets_per_frame, gts_per_frame, klass, 0.5, cfg)
        ap50 = average_precision(tp, n_gt, interpolation)
        p, r, c = _max_f1_point(confs, tp, n_gt)
        prec, rec = pr_points(tp, n_gt)
        curves[klass.label] = {"confidence": confs.tolist(), "precision": prec.tolist(), "recall": rec.tolist()}
        aps = [
            ap50 if thr == 0.5 else average_precision(*_ranked_flags(dets_per_frame, gts_per_frame, klass, thr, cfg)[1:], interpolation)
            for thr in thresholds
        ]
        defined = [a for a in aps if a is not None]
        ap50_95 = float(np.mean(defined)) if defined else None
        per_class[klass.label] = ClassMetrics(n_gt, len(tp), p, r, ap50, ap50_95, c)

    cm = confusion_matrix(dets_per_frame, gts_per_frame, 0.5, conf_thr, cfg=cfg)
    return EvalReport(
        per_class=per_class,
        map50=_mean(m.ap50 for m in per_class.values()),
        map50_95=_mean(m.ap50_95 for m in per_class.values()),
        precision=_mean(m.precision for m in per_class.values()),
        recall=_mean(m.recall for m in per_class.values()),
        confusion=cm.tolist(),
        iou_thresholds=thresholds,
        interpolation=interpolation,
        pr_curves=curves,
    )


map_over_thresholds = evaluate


def confusion_matrix(
    dets_per_frame,
    gts_per_frame,
    iou_thr: float = 0.5,
    conf_thr: float = 0.25,
    normalize: bool = False,
    cfg: EncodingConfig = DEFAULT_CONFIG,
) -> np.ndarray:
    """``(C+1, C+1)`` matrix indexed ``[predicted, true]``, background last.

    Per frame, detections at or above ``conf_thr`` are paired with ground
    truth class-agnostically, highest IoU first, each side used once.
    """
    if not 0.0 <= conf_thr <= 1.0:
        raise InvalidArgument("conf_thr must be in [0, 1]")
    bg = NUM_CLASSES
    m = np.zeros((NUM_CLASSES + 1, NUM_CLASSES + 1), dtype=np.int64)
    for dets, gts in zip(dets_per_frame, gts_per_frame):
        dets = [d for d in dets if d.confidence >= conf_thr]
        gts = list(gts)
        ious = iou_matrix(gts, [d.box for d in dets], cfg)
        gi, di = np.nonzero(ious >= iou_thr) if ious.size else (np.array([], int), np.array([], int))
        order = np.lexsort((di, gi, -ious[gi, di])) if len(gi) else []
        gt_used, det_used = set(), set()
        for k in order:
            g, d = int(gi[k]), int(di[k])
            if g in gt_used or d in det_used:
                continue
            gt_used.add(g)
            det_used.add(d)
            m[int(dets[d].cls), int(gts[g].cls)] += 1
        for g, box in enumerate(gts):
            if g not in gt_used:
                m[bg, int(box.cls)] += 1
        for d, det in enumerate(dets):
            if d not in det_used:
                m[int(det.cls), bg] += 1
    return normalize_confusion(m) if normalize else m


def normalize_confusion(m: np.ndarray) -> np.ndarray:
    """Divide each column by its sum; empty columns stay zero."""
    m = np.asarray(m, dtype=float)
    sums = m.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sums > 0, m / sums, 0.0)
