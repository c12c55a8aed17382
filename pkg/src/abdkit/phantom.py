"""Synthetic abdominal CT phantoms with exact analytic ground truth.

Each axial slice inside the abdominal range is a set of concentric ellipses:
subcutaneous fat ring, muscle ring, and an interior with scattered visceral
fat blobs. Outside the range the body tapers and loses its fat ring, so the
abdomen boundary is encoded geometrically. Masks are always the exact
analytic regions; HU noise never touches them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .heatmap import LocLabel
from .segment import LABEL_MUSCLE, LABEL_SFA, LABEL_VFA
from .volume import HU_MAX, HU_MIN, Spacing, Volume, save_rawv

DEFAULT_HU = {"air": -1000.0, "fat": -100.0, "muscle": 50.0, "visceral": 200.0}


class PhantomSpecError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple = (128, 32, 32)
    spacing: tuple = (3.0, 4.0, 4.0)          # (sz, sy, sx) mm
    abdomen_start: int = 40
    abdomen_end: int = 90
    body_ry_mm: float = 52.0                  # ellipse semi-axes at full size
    body_rx_mm: float = 54.0
    taper_min: float = 0.55                   # radius multiplier at volume ends
    sfa_thickness_mm: float = 10.0
    muscle_thickness_mm: float = 9.0
    vfa_blob_count: int = 2
    vfa_blob_radius_mm: float = 7.0
    hu_values: dict = field(default_factory=lambda: dict(DEFAULT_HU))
    noise_sigma_hu: float = 0.0
    seed: int = 0

    def __post_init__(self):
        D, H, W = self.dims
        if not (0 <= self.abdomen_start <= self.abdomen_end < D):
            raise PhantomSpecError(
                f"abdomen range [{self.abdomen_start}, {self.abdomen_end}] "
                f"outside [0, {D})")
        if self.sfa_thickness_mm <= 0 or self.muscle_thickness_mm <= 0:
            raise PhantomSpecError("ring thicknesses must be positive")
        sz, sy, sx = self.spacing
        if self.body_ry_mm >= (H / 2 - 1) * sy or self.body_rx_mm >= (W / 2 - 1) * sx:
            raise PhantomSpecError("body ellipse does not fit inside the grid")


def _inside(yy_mm, xx_mm, ry, rx):
    if ry <= 0 or rx <= 0:
        return np.zeros_like(yy_mm, dtype=bool)
    return (yy_mm / ry) ** 2 + (xx_mm / rx) ** 2 <= 1.0


def _slice_scale(spec: PhantomSpec, d: int) -> float:
    """Body-size multiplier: 1 inside the abdomen, tapering linearly outside."""
    if spec.abdomen_start <= d <= spec.abdomen_end:
        return 1.0
    if d < spec.abdomen_start:
        span = max(1, spec.abdomen_start)
        frac = (spec.abdomen_start - d) / span
    else:
        span = max(1, spec.dims[0] - 1 - spec.abdomen_end)
        frac = (d - spec.abdomen_end) / span
    return 1.0 - (1.0 - spec.taper_min) * frac


def generate(spec: PhantomSpec):
    """Returns (Volume, LocLabel, list of per-slice uint8 label masks)."""
    D, H, W = spec.dims
    sz, sy, sx = spec.spacing
    hu = spec.hu_values
    rng = np.random.default_rng(spec.seed)

    yy = (np.arange(H) - (H - 1) / 2.0) * sy
    xx = (np.arange(W) - (W - 1) / 2.0) * sx
    yy_mm, xx_mm = np.meshgrid(yy, xx, indexing="ij")

    vox = np.full((D, H, W), hu["air"], dtype=np.float64)
    masks = np.zeros((D, H, W), dtype=np.uint8)

    for d in range(D):
        scale = _slice_scale(spec, d)
        ry, rx = spec.body_ry_mm * scale, spec.body_rx_mm * scale
        in_abdomen = spec.abdomen_start <= d <= spec.abdomen_end
        body = _inside(yy_mm, xx_mm, ry, rx)
        if in_abdomen:
            fat_in = _inside(yy_mm, xx_mm, ry - spec.sfa_thickness_mm,
                             rx - spec.sfa_thickness_mm)
            musc_in = _inside(yy_mm, xx_mm,
                              ry - spec.sfa_thickness_mm - spec.muscle_thickness_mm,
                              rx - spec.sfa_thickness_mm - spec.muscle_thickness_mm)
            sfa = body & ~fat_in
            muscle = fat_in & ~musc_in
            interior = musc_in
        else:
            musc_in = _inside(yy_mm, xx_mm, ry - spec.muscle_thickness_mm,
                              rx - spec.muscle_thickness_mm)
            sfa = np.zeros_like(body)
            muscle = body & ~musc_in
            interior = musc_in

        sl = vox[d]
        sl[sfa] = hu["fat"]
        sl[muscle] = hu["muscle"]
        sl[interior] = hu["visceral"]
        masks[d][muscle] = LABEL_MUSCLE
        masks[d][sfa] = LABEL_SFA

        if in_abdomen and spec.vfa_blob_count > 0:
            inner_ry = ry - spec.sfa_thickness_mm - spec.muscle_thickness_mm
            inner_rx = rx - spec.sfa_thickness_mm - spec.muscle_thickness_mm
            br = spec.vfa_blob_radius_mm
            for _ in range(spec.vfa_blob_count):
                # Blob center inside the interior ellipse, clear of the wall.
                ang = rng.uniform(0, 2 * np.pi)
                rad = rng.uniform(0, 0.9)
                cy = np.sqrt(rad) * (inner_ry - br - 1.0) * np.sin(ang)
                cx = np.sqrt(rad) * (inner_rx - br - 1.0) * np.cos(ang)
                blob = ((yy_mm - cy) ** 2 + (xx_mm - cx) ** 2) <= br ** 2
                blob &= interior
                sl[blob] = hu["fat"]
                masks[d][blob] = LABEL_VFA

    if spec.noise_sigma_hu > 0:
        vox = vox + rng.normal(0.0, spec.noise_sigma_hu, size=vox.shape)
        vox = np.clip(vox, HU_MIN, HU_MAX)

    volume = Volume(voxels=vox, spacing=Spacing(sz, sy, sx))
    label = LocLabel(spec.abdomen_start, spec.abdomen_end)
    return volume, label, [masks[d] for d in range(D)]


def generate_view_dependent(spec: PhantomSpec):
    """Phantom whose abdomen boundary is invisible to per-slice statistics.

    Every slice has the identical body (muscle ring + interior) and a bright
    marker disk of constant size; only the marker's row position changes.
    Inside the abdomen the marker sits on the center row, so the coronal
    center plane sees it; outside it moves off-center. Per-slice means are
    identical across all slices.
    """
    D, H, W = spec.dims
    sz, sy, sx = spec.spacing
    hu = spec.hu_values

    yy = (np.arange(H) - (H - 1) / 2.0) * sy
    xx = (np.arange(W) - (W - 1) / 2.0) * sx
    yy_mm, xx_mm = np.meshgrid(yy, xx, indexing="ij")

    ry, rx = spec.body_ry_mm, spec.body_rx_mm
    body = _inside(yy_mm, xx_mm, ry, rx)
    musc_in = _inside(yy_mm, xx_mm, ry - spec.muscle_thickness_mm,
                      rx - spec.muscle_thickness_mm)
    muscle = body & ~musc_in
    interior = musc_in

    base = np.full((H, W), hu["air"], dtype=np.float64)
    base[muscle] = hu["muscle"]
    base[interior] = 30.0  # soft-tissue interior

    marker_r = spec.vfa_blob_radius_mm
    inner_ry = ry - spec.muscle_thickness_mm
    off = 0.55 * inner_ry

    def marker(cy_mm):
        return ((yy_mm - cy_mm) ** 2 + xx_mm ** 2) <= marker_r ** 2

    m_center = marker(0.0)
    m_offsets = (marker(-off), marker(off))

    base_mask = np.zeros((H, W), dtype=np.uint8)
    base_mask[muscle] = LABEL_MUSCLE

    rng = np.random.default_rng(spec.seed)
    vox = np.empty((D, H, W), dtype=np.float64)
    masks = []
    for d in range(D):
        sl = base.copy()
        if spec.abdomen_start <= d <= spec.abdomen_end:
            m = m_center
        else:
            # Randomize which side the marker sits on so the off-center rows
            # carry no consistent pattern the volume branch could memorize.
            m = m_offsets[int(rng.integers(0, 2))]
        sl[m] = 240.0  # saturates the default soft-tissue window
        vox[d] = sl
        masks.append(base_mask.copy())

    if spec.noise_sigma_hu > 0:
        vox = np.clip(vox + rng.normal(0.0, spec.noise_sigma_hu, size=vox.shape),
                      HU_MIN, HU_MAX)

    volume = Volume(voxels=vox, spacing=Spacing(sz, sy, sx))
    return volume, LocLabel(spec.abdomen_start, spec.abdomen_end), masks


MANIFEST_VERSION = 1


def generate_corpus(n: int, out_dir, base_spec: PhantomSpec = PhantomSpec(),
                    start_jitter: int = 12, end_jitter: int = 12,
                    radius_jitter_mm: float = 3.0, seed: int = 0,
                    family: str = "standard") -> dict:
    """Write n jittered phantoms plus a manifest JSON; fully deterministic."""
    if n < 1:
        raise PhantomSpecError("corpus size must be >= 1")
    if family not in ("standard", "view_dependent"):
        raise PhantomSpecError(f"unknown phantom family {family!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    D = base_spec.dims[0]
    cases = []
    for i in range(n):
        ds = int(rng.integers(-start_jitter, start_jitter + 1))
        de = int(rng.integers(-end_jitter, end_jitter + 1))
        start = min(D - 2, max(1, base_spec.abdomen_start + ds))
        end = min(D - 2, max(start + 4, base_spec.abdomen_end + de))
        dr = float(rng.uniform(-radius_jitter_mm, radius_jitter_mm))
        spec = PhantomSpec(
            dims=base_spec.dims, spacing=base_spec.spacing,
            abdomen_start=start, abdomen_end=end,
            body_ry_mm=base_spec.body_ry_mm + dr,
            body_rx_mm=base_spec.body_rx_mm + dr,
            taper_min=base_spec.taper_min,
            sfa_thickness_mm=base_spec.sfa_thickness_mm,
            muscle_thickness_mm=base_spec.muscle_thickness_mm,
            vfa_blob_count=base_spec.vfa_blob_count,
            vfa_blob_radius_mm=base_spec.vfa_blob_radius_mm,
            hu_values=dict(base_spec.hu_values),
            noise_sigma_hu=base_spec.noise_sigma_hu,
            seed=int(rng.integers(0, 2 ** 31)),
        )
        gen = generate_view_dependent if family == "view_dependent" else generate
        volume, label, masks = gen(spec)
        vol_path = out_dir / f"case{i:03d}.rawv"
        mask_path = out_dir / f"case{i:03d}_mask.rawv"
        save_rawv(vol_path, volume.voxels, volume.spacing, dtype="float32")
        save_rawv(mask_path, np.stack(masks), volume.spacing, dtype="uint8")
        cases.append({
            "id": f"case{i:03d}",
            "volume": vol_path.name,
            "mask": mask_path.name,
            "label": {"start": label.start_idx, "end": label.end_idx},
            "spec": asdict(spec),
        })
    manifest = {"version": MANIFEST_VERSION, "family": family, "cases": cases}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as f:
        m = json.load(f)
    if m.get("version") != MANIFEST_VERSION:
        raise PhantomSpecError(f"unsupported manifest version {m.get('version')}")
    return m
