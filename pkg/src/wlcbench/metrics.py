"""Evaluation suite: confusion matrices, producer's accuracies, AA/OA/mIoU,
LR-to-HR transition matrices, and the LR-vs-HR sanity evaluation.

Average accuracy (AA) is the unweighted mean of per-class producer's
accuracies over the classes present in the reference, which deliberately
gives less weight to large, easy classes than overall accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import AbstractSet, Iterable

import numpy as np

from .dataset import LabelRaster, N_SIMPLIFIED_CLASSES, Patch, Scheme
from .labels import SAVANNA, SIMPLIFIED_CLASS_NAMES, simplify_igbp, trainable_mask

K = N_SIMPLIFIED_CLASSES


@dataclass
class ConfusionMatrix:
    """K×K counts; rows are the reference class, columns the prediction."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (K, K):
            raise ValueError(f"confusion matrix must be {K}x{K}, got {c.shape}")
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")
        self.counts = c

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @classmethod
    def zero(cls) -> "ConfusionMatrix":
        return cls(np.zeros((K, K), dtype=np.int64))


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-normalized LR->HR joint histogram plus per-row pixel support."""

    probs: np.ndarray        # K×K float64
    row_support: np.ndarray  # K int64


@dataclass(frozen=True)
class MetricsReport:
    producers_accuracy: np.ndarray  # K floats, NaN for absent classes
    iou: np.ndarray                 # K floats, NaN for absent classes
    present: np.ndarray             # K bools (row support > 0)
    support: np.ndarray             # K int64 reference-pixel counts
    aa: float
    oa: float
    miou: float
    pixels: int


def confusion(
    reference: LabelRaster,
    prediction: LabelRaster,
    eval_mask: np.ndarray | None = None,
) -> ConfusionMatrix:
    """Tally reference/prediction pairs over jointly valid pixels.

    Pixels where either raster is 0 are excluded, on top of the optional
    eval_mask (e.g. a Savanna-exclusion policy on the reference).
    """
    if reference.shape != prediction.shape:
        raise ValueError(
            f"shape mismatch: reference {reference.shape} vs prediction {prediction.shape}"
        )
    for name, raster in (("reference", reference), ("prediction", prediction)):
        if raster.scheme is not Scheme.SIMPLIFIED10:
            raise ValueError(f"{name} raster must be SIMPLIFIED10, got {raster.scheme.name}")
    ref = reference.values.ravel()
    pred = prediction.values.ravel()
    keep = (ref != 0) & (pred != 0)
    if eval_mask is not None:
        eval_mask = np.asarray(eval_mask, dtype=bool)
        if eval_mask.shape != reference.shape:
            raise ValueError(
                f"eval_mask shape {eval_mask.shape} != raster shape {reference.shape}"
            )
        keep &= eval_mask.ravel()
    flat = (ref[keep].astype(np.int64) - 1) * K + (pred[keep].astype(np.int64) - 1)
    counts = np.bincount(flat, minlength=K * K).reshape(K, K)
    return ConfusionMatrix(counts)


def report(cm: ConfusionMatrix) -> MetricsReport:
    """Derive producer's accuracies, AA, OA, and IoU/mIoU from a confusion matrix.

    Classes without reference support are marked absent (NaN) and excluded
    from AA and mIoU; OA counts every evaluated pixel.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("cannot compute metrics over zero evaluated pixels")
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    diag = np.diag(counts)
    present = row > 0

    pa = np.full(K, np.nan)
    pa[present] = diag[present] / row[present]
    iou = np.full(K, np.nan)
    denom = row + col - diag
    iou[present] = diag[present] / denom[present]

    return MetricsReport(
        producers_accuracy=pa,
        iou=iou,
        present=present,
        support=cm.counts.sum(axis=1),
        aa=float(pa[present].mean()),
        oa=float(diag.sum() / total),
        miou=float(iou[present].mean()),
        pixels=int(total),
    )


def transition_matrix(lr: LabelRaster, hr: LabelRaster) -> TransitionMatrix:
    """Probability of each HR class conditioned on the LR class.

    probs[l-1][h-1] = count(lr=l and hr=h) / count(lr=l); rows without
    support are all zero.
    """
    if lr.shape != hr.shape:
        raise ValueError(f"shape mismatch: lr {lr.shape} vs hr {hr.shape}")
    for name, raster in (("lr", lr), ("hr", hr)):
        if raster.scheme is not Scheme.SIMPLIFIED10:
            raise ValueError(f"{name} raster must be SIMPLIFIED10, got {raster.scheme.name}")
    lv = lr.values.ravel()
    hv = hr.values.ravel()
    keep = (lv != 0) & (hv != 0)
    if not keep.any():
        raise ValueError("no jointly valid pixels for the transition matrix")
    flat = (lv[keep].astype(np.int64) - 1) * K + (hv[keep].astype(np.int64) - 1)
    joint = np.bincount(flat, minlength=K * K).reshape(K, K).astype(np.int64)
    support = joint.sum(axis=1)
    probs = np.zeros((K, K), dtype=np.float64)
    nz = support > 0
    probs[nz] = joint[nz] / support[nz, None]
    return TransitionMatrix(probs=probs, row_support=support)


def _as_simplified(raster: LabelRaster) -> LabelRaster:
    return simplify_igbp(raster) if raster.scheme is Scheme.IGBP17 else raster


def aggregate_confusion(
    patches: Iterable[Patch],
    pred: str = "lr",
    ref: str = "hr",
    masked_classes: AbstractSet[int] = frozenset({SAVANNA}),
) -> ConfusionMatrix:
    """Sum per-patch confusion matrices for one raster slot against another.

    IGBP17 slots are simplified on the fly; masked_classes are dropped from
    the reference side (integer-count merging keeps the order irrelevant).
    """
    slots = {"lr", "hr"}
    if pred not in slots or ref not in slots:
        raise ValueError(f"pred/ref must be one of {sorted(slots)}")
    total = ConfusionMatrix.zero()
    n = 0
    for patch in patches:
        rasters = {}
        for slot in (pred, ref):
            raster = patch.lr_labels if slot == "lr" else patch.hr_labels
            if raster is None:
                raise ValueError(f"patch {patch.id!r} lacks {slot} labels")
            rasters[slot] = _as_simplified(raster)
        eval_mask = trainable_mask(rasters[ref], masked_classes)
        total = total + confusion(rasters[ref], rasters[pred], eval_mask)
        n += 1
    if n == 0:
        raise ValueError("no patches to evaluate")
    return total


def lr_vs_hr_eval(
    patches: Iterable[Patch],
    masked_classes: AbstractSet[int] = frozenset({SAVANNA}),
) -> MetricsReport:
    """Score the low-resolution labels as a prediction of the HR reference.

    This is the sanity-check lower bound: every patch must carry HR labels,
    and one confusion matrix is aggregated across patches before reporting.
    """
    return report(aggregate_confusion(patches, pred="lr", ref="hr", masked_classes=masked_classes))


def report_csv(rep: MetricsReport) -> str:
    """CSV rows (class,name,producers_acc,iou,support); absent classes show '-'."""
    lines = ["class,name,producers_acc,iou,support"]
    for i in range(K):
        if rep.present[i]:
            pa = f"{rep.producers_accuracy[i]:.6f}"
            iou = f"{rep.iou[i]:.6f}"
        else:
            pa = iou = "-"
        lines.append(f"{i + 1},{SIMPLIFIED_CLASS_NAMES[i]},{pa},{iou},{int(rep.support[i])}")
    return "\n".join(lines) + "\n"


def report_json(rep: MetricsReport) -> str:
    import json

    return json.dumps(
        {
            "aa": rep.aa,
            "oa": rep.oa,
            "miou": rep.miou,
            "pixels": rep.pixels,
        }
    )


def matrix_csv(values: np.ndarray, value_format: str = "d") -> str:
    """CSV grid with class-name headers for a K×K count or probability matrix."""
    values = np.asarray(values)
    if values.shape != (K, K):
        raise ValueError(f"expected a {K}x{K} matrix, got {values.shape}")
    header = "," + ",".join(SIMPLIFIED_CLASS_NAMES)
    lines = [header]
    for i in range(K):
        cells = ",".join(format(v, value_format) for v in values[i])
        lines.append(f"{SIMPLIFIED_CLASS_NAMES[i]},{cells}")
    return "\n".join(lines) + "\n"
