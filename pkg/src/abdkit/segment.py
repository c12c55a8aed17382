"""Rule-based tissue segmentation of axial HU slices.

Labels: 0 background, 1 muscle, 2 SFA (subcutaneous fat), 3 VFA (visceral
fat). Fat is split by reachability: the muscle mask is morphologically
closed to seal the abdominal wall, then fat connected to the slice border
through non-wall pixels is subcutaneous; enclosed fat is visceral.
Also ingests externally generated uint8 masks with validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import load_array

LABEL_BACKGROUND = 0
LABEL_MUSCLE = 1
LABEL_SFA = 2
LABEL_VFA = 3
VALID_LABELS = (0, 1, 2, 3)

_STRUCT8 = np.ones((3, 3), dtype=bool)                       # 8-connectivity
_STRUCT4 = ndimage.generate_binary_structure(2, 1)           # 4-connectivity


class MaskValidationError(ValueError):
    pass


@dataclass(frozen=True)
class SegParams:
    fat_range: tuple = (-190.0, -30.0)
    muscle_range: tuple = (-29.0, 150.0)
    body_threshold: float = -500.0
    closing_radius_mm: float = 5.0
    min_component_mm2: float = 10.0

    def __post_init__(self):
        if self.fat_range[1] >= self.muscle_range[0] and self.fat_range[0] <= self.muscle_range[1]:
            raise MaskValidationError("fat_range and muscle_range must be disjoint")
        if self.closing_radius_mm <= 0:
            raise MaskValidationError("closing_radius_mm must be positive")


@dataclass(frozen=True)
class SegResult:
    labels: np.ndarray
    empty_warning: bool = False


def _disk(radius_px: int) -> np.ndarray:
    r = max(1, int(radius_px))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (yy * yy + xx * xx) <= r * r


def body_mask(slice_hu: np.ndarray, params: SegParams = SegParams()):
    """Largest above-threshold component with interior holes filled."""
    above = np.asarray(slice_hu) >= params.body_threshold
    if not above.any():
        return np.zeros_like(above), True
    comp, n = ndimage.label(above, structure=_STRUCT8)
    sizes = np.bincount(comp.ravel())
    sizes[0] = 0
    mask = comp == sizes.argmax()
    return ndimage.binary_fill_holes(mask), False


def segment_slice(slice_hu: np.ndarray, spacing, params: SegParams = SegParams()) -> SegResult:
    """Label an axial HU slice; `spacing` is (sy, sx) in mm."""
    hu = np.asarray(slice_hu, dtype=np.float64)
    sy, sx = float(spacing[0]), float(spacing[1])
    body, empty = body_mask(hu, params)
    labels = np.zeros(hu.shape, dtype=np.uint8)
    if empty:
        return SegResult(labels=labels, empty_warning=True)

    muscle = body & (hu >= params.muscle_range[0]) & (hu <= params.muscle_range[1])
    fat = body & (hu >= params.fat_range[0]) & (hu <= params.fat_range[1])

    # Seal one-pixel gaps in the abdominal wall before the reachability split.
    radius_px = max(1, int(round(params.closing_radius_mm / min(sy, sx))))
    wall = ndimage.binary_closing(muscle, structure=_disk(radius_px))

    # Flood from the border through non-wall pixels (4-connectivity);
    # fat reachable from outside the wall is subcutaneous.
    outside = np.zeros(hu.shape, dtype=bool)
    outside[0, :] = outside[-1, :] = True
    outside[:, 0] = outside[:, -1] = True
    outside &= ~wall
    reach = ndimage.binary_propagation(outside, mask=~wall, structure=_STRUCT4)

    sfa = fat & reach
    vfa = fat & ~reach

    min_px = params.min_component_mm2 / (sy * sx)
    for tissue, lab in ((muscle, LABEL_MUSCLE), (sfa, LABEL_SFA), (vfa, LABEL_VFA)):
        comp, n = ndimage.label(tissue, structure=_STRUCT8)
        if n:
            sizes = np.bincount(comp.ravel())
            keep = np.flatnonzero(sizes >= min_px)
            keep = keep[keep != 0]
            labels[np.isin(comp, keep)] = lab
    return SegResult(labels=labels)


def segment_volume(volume, start: int = 0, end: int = None,
                   params: SegParams = SegParams()):
    """Segment axial slices [start, end] of a Volume; returns a label list."""
    D = volume.dims[0]
    end = D - 1 if end is None else end
    sp = (volume.spacing.sy, volume.spacing.sx)
    return [segment_slice(volume.axial(k), sp, params).labels
            for k in range(start, end + 1)]


def ingest_mask(path, expected_dims) -> np.ndarray:
    """Load and validate an externally generated uint8 label mask file."""
    arr, _ = load_array(path)
    arr = np.asarray(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        arr_round = np.rint(arr)
        if not np.array_equal(arr_round, arr):
            raise MaskValidationError(f"{path}: non-integer label values")
        arr = arr_round
    expected = tuple(expected_dims)
    if arr.shape != expected:
        raise MaskValidationError(f"{path}: dims {arr.shape} do not match expected {expected}")
    bad = sorted(set(np.unique(arr)) - set(VALID_LABELS))
    if bad:
        raise MaskValidationError(f"{path}: unknown label values {bad}")
    return arr.astype(np.uint8)
