"""Segmentation metrics (DSC, IoU, 95th-percentile Hausdorff), the
localization evaluation table, and clinical tissue quantification reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial import cKDTree

from .heatmap import l1_error_mm
from .segment import LABEL_MUSCLE, LABEL_SFA, LABEL_VFA

CLASS_NAMES = {"muscle": LABEL_MUSCLE, "sfa": LABEL_SFA, "vfa": LABEL_VFA}


class MetricError(ValueError):
    pass


def _as_bool(a):
    return np.asarray(a).astype(bool)


def dice(a, b) -> float:
    """2|A∩B| / (|A|+|B|); both empty -> 1.0."""
    a, b = _as_bool(a), _as_bool(b)
    if a.shape != b.shape:
        raise MetricError(f"mask dims differ: {a.shape} vs {b.shape}")
    na, nb = a.sum(), b.sum()
    if na + nb == 0:
        return 1.0
    return 2.0 * (a & b).sum() / (na + nb)


def iou(a, b) -> float:
    """|A∩B| / |A∪B|; both empty -> 1.0."""
    a, b = _as_bool(a), _as_bool(b)
    if a.shape != b.shape:
        raise MetricError(f"mask dims differ: {a.shape} vs {b.shape}")
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return (a & b).sum() / union


def boundary_pixels(mask) -> np.ndarray:
    """Mask pixels with a 4-neighbor outside the mask (grid edges count)."""
    m = _as_bool(mask)
    padded = np.pad(m, 1)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] &
                padded[1:-1, :-2] & padded[1:-1, 2:])
    return m & ~interior


def _nearest_rank(values: np.ndarray, q: float) -> float:
    """q-quantile by nearest rank: ceil(q*n)-th smallest."""
    v = np.sort(values)
    k = int(np.ceil(q * v.size))
    return float(v[max(0, k - 1)])


def hd95(a, b, spacing=(1.0, 1.0)) -> float:
    """Symmetric 95th-percentile boundary Hausdorff distance in mm."""
    a, b = _as_bool(a), _as_bool(b)
    if a.shape != b.shape:
        raise MetricError(f"mask dims differ: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise MetricError("hd95 is undefined for empty masks")
    sy, sx = float(spacing[0]), float(spacing[1])
    pa = np.argwhere(boundary_pixels(a)) * np.array([sy, sx])
    pb = np.argwhere(boundary_pixels(b)) * np.array([sy, sx])
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return max(_nearest_rank(d_ab, 0.95), _nearest_rank(d_ba, 0.95))


@dataclass(frozen=True)
class SegScores:
    """Per-class and macro-averaged segmentation quality."""

    per_class: dict       # name -> {"dsc": .., "iou": .., "hd95": ..}
    macro_dsc: float
    macro_iou: float
    macro_hd95: float


def score_masks(pred, gt, spacing=(1.0, 1.0)) -> SegScores:
    """Score a predicted label mask (or stack) against ground truth."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise MetricError(f"mask dims differ: {pred.shape} vs {gt.shape}")
    per = {}
    for name, lab in CLASS_NAMES.items():
        p, g = pred == lab, gt == lab
        entry = {"dsc": dice(p, g), "iou": iou(p, g)}
        if p.any() and g.any():
            if p.ndim == 3:
                hds = [hd95(pk, gk, spacing) for pk, gk in zip(p, g)
                       if pk.any() and gk.any()]
                entry["hd95"] = float(np.mean(hds)) if hds else None
            else:
                entry["hd95"] = hd95(p, g, spacing)
        else:
            entry["hd95"] = None
        per[name] = entry
    hds = [e["hd95"] for e in per.values() if e["hd95"] is not None]
    return SegScores(per_class=per,
                     macro_dsc=float(np.mean([e["dsc"] for e in per.values()])),
                     macro_iou=float(np.mean([e["iou"] for e in per.values()])),
                     macro_hd95=float(np.mean(hds)) if hds else None)


# ---------------------------------------------------------------------------
# Localization evaluation (average / max L1 error, threshold proportions)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocEvalInput:
    pred: float
    gt: float
    s_res: float
    s_ori: float


@dataclass(frozen=True)
class LocEvalRow:
    avg_mm: float
    max_mm: float
    pct_le_5mm: float
    pct_le_10mm: float


def loc_eval_row(cases) -> LocEvalRow:
    """Aggregate physical L1 errors for one endpoint over a case list."""
    if not cases:
        raise MetricError("loc_eval_row needs at least one case")
    errs = np.array([l1_error_mm(c.pred, c.gt, c.s_res, c.s_ori) for c in cases])
    return LocEvalRow(avg_mm=float(errs.mean()),
                      max_mm=float(errs.max()),
                      pct_le_5mm=float((errs <= 5.0).mean() * 100.0),
                      pct_le_10mm=float((errs <= 10.0).mean() * 100.0))


def loc_eval_table(start_cases, end_cases) -> dict:
    return {"start": loc_eval_row(start_cases), "end": loc_eval_row(end_cases)}


# ---------------------------------------------------------------------------
# Tissue quantification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SliceQuant:
    slice_index: int
    area_cm2: dict        # class name -> cm^2
    mean_hu: dict         # class name -> mean HU or None if class absent


@dataclass(frozen=True)
class TissueReport:
    slices: tuple         # of SliceQuant
    volume_cm3: dict      # class name -> cm^3
    slice_count: int
    spacing: tuple        # (sz, sy, sx) mm


def quantify(masks, volume, start_index: int = 0) -> TissueReport:
    """Per-slice areas and mean HU plus aggregate volumes from label masks.

    `masks` are per-slice label arrays aligned to volume axial slices
    starting at `start_index`; HU statistics come from the raw volume.
    """
    sp = volume.spacing
    D, H, W = volume.dims
    if start_index < 0 or start_index + len(masks) > D:
        raise MetricError(f"slice range [{start_index}, {start_index + len(masks)}) "
                          f"outside volume depth {D}")
    px_cm2 = sp.sy * sp.sx / 100.0
    slices = []
    totals = {name: 0.0 for name in CLASS_NAMES}
    for i, mask in enumerate(masks):
        mask = np.asarray(mask)
        if mask.shape != (H, W):
            raise MetricError(f"mask {i} dims {mask.shape} vs slice dims {(H, W)}")
        k = start_index + i
        hu = volume.axial(k)
        areas, means = {}, {}
        for name, lab in CLASS_NAMES.items():
            sel = mask == lab
            n = int(sel.sum())
            areas[name] = n * px_cm2
            means[name] = float(hu[sel].mean()) if n else None
            totals[name] += areas[name] * sp.sz / 10.0
        slices.append(SliceQuant(slice_index=k, area_cm2=areas, mean_hu=means))
    return TissueReport(slices=tuple(slices), volume_cm3=totals,
                        slice_count=len(slices), spacing=(sp.sz, sp.sy, sp.sx))


def report_to_dict(report: TissueReport) -> dict:
    return {
        "slices": [asdict(s) for s in report.slices],
        "volume_cm3": dict(report.volume_cm3),
        "slice_count": report.slice_count,
        "spacing": list(report.spacing),
    }


def report_from_dict(d: dict) -> TissueReport:
    return TissueReport(
        slices=tuple(SliceQuant(slice_index=s["slice_index"],
                                area_cm2=s["area_cm2"],
                                mean_hu=s["mean_hu"]) for s in d["slices"]),
        volume_cm3=d["volume_cm3"],
        slice_count=d["slice_count"],
        spacing=tuple(d["spacing"]),
    )


def report_json(report: TissueReport) -> str:
    """Canonical JSON serialization (sorted keys, no whitespace drift)."""
    return json.dumps(report_to_dict(report), sort_keys=True, separators=(",", ":"))


def _fmt6(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".6g")


def export_report(report: TissueReport, fmt: str, path):
    """Write a TissueReport as CSV (6 significant digits) or canonical JSON."""
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as f:
            f.write(report_json(report))
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(["slice_index", "muscle_cm2", "sfa_cm2", "vfa_cm2",
                        "muscle_hu", "sfa_hu", "vfa_hu"])
            for s in report.slices:
                w.writerow([s.slice_index,
                            _fmt6(s.area_cm2["muscle"]), _fmt6(s.area_cm2["sfa"]),
                            _fmt6(s.area_cm2["vfa"]),
                            _fmt6(s.mean_hu["muscle"]), _fmt6(s.mean_hu["sfa"]),
                            _fmt6(s.mean_hu["vfa"])])
    else:
        raise MetricError(f"unknown report format {fmt!r}")


def load_report_json(path) -> TissueReport:
    with open(path, encoding="utf-8") as f:
        return report_from_dict(json.load(f))
