"""HTTP service for interactive mask refinement.

Serves study volumes as windowed slice images, label masks as palette or
raw images, and accepts brush-stroke edit batches under optimistic
concurrency (mask_version). Study state lives on disk: volume, current and
initial mask stacks, an append-only edit log, and a meta file.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

import numpy as np
from PIL import Image

from .metrics import quantify, report_json
from .segment import SegParams, ingest_mask, segment_volume
from .volume import Spacing, Volume, WindowSpec, load_volume, save_rawv, save_volume

VALID_LABELS = (0, 1, 2, 3)
DEFAULT_WINDOW = (40.0, 400.0)

# Overlay palette: background, muscle (red), SFA (yellow), VFA (blue).
MASK_PALETTE = {0: (0, 0, 0), 1: (230, 60, 60), 2: (235, 220, 80), 3: (70, 110, 230)}

VOLUME_FILE = "volume.rawv"
MASKS_FILE = "masks.rawv"
MASKS_INITIAL_FILE = "masks_initial.rawv"
EDITS_FILE = "edits.jsonl"
META_FILE = "meta.json"


class EditError(ValueError):
    """Semantic problem in an edit batch (bad label, out-of-bounds stroke)."""


# ---------------------------------------------------------------------------
# Brush rasterization (the rule shared with the browser client)
# ---------------------------------------------------------------------------

def rasterize_stroke(shape, polyline, radius_px: float) -> np.ndarray:
    """Round-brush footprint: pixel painted iff its center lies within
    `radius_px` of the polyline (point-to-segment distance, (x, y) points).
    """
    H, W = shape
    pts = np.asarray(polyline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise EditError("polyline must be a nonempty list of [x, y] points")
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    hit = np.zeros((H, W), dtype=bool)
    r2 = float(radius_px) ** 2
    if pts.shape[0] == 1:
        px, py = pts[0]
        return (xx - px) ** 2 + (yy - py) ** 2 <= r2
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        dx, dy = bx - ax, by - ay
        seg2 = dx * dx + dy * dy
        if seg2 == 0.0:
            d2 = (xx - ax) ** 2 + (yy - ay) ** 2
        else:
            t = np.clip(((xx - ax) * dx + (yy - ay) * dy) / seg2, 0.0, 1.0)
            d2 = (xx - (ax + t * dx)) ** 2 + (yy - (ay + t * dy)) ** 2
        hit |= d2 <= r2
    return hit


def apply_edit_batch(masks: np.ndarray, batch: dict) -> np.ndarray:
    """Apply one validated EditBatch to a (D, H, W) uint8 stack, returning a
    new stack. Raises EditError without touching the input on any bad stroke.
    """
    D, H, W = masks.shape
    k = batch["slice_index"]
    if not isinstance(k, int) or not 0 <= k < D:
        raise EditError(f"slice_index {k!r} outside [0, {D})")
    strokes = batch["strokes"]
    if not strokes:
        raise EditError("strokes must be nonempty")
    footprints = []
    for i, s in enumerate(strokes):
        if s["label"] not in VALID_LABELS:
            raise EditError(f"strokes[{i}].label {s['label']!r} not in {VALID_LABELS}")
        if not (float(s["brush_radius_px"]) > 0):
            raise EditError(f"strokes[{i}].brush_radius_px must be > 0")
        for pt in s["polyline"]:
            if len(pt) != 2:
                raise EditError(f"strokes[{i}] point {pt!r} is not [x, y]")
            px, py = pt
            if not (0 <= px <= W - 1 and 0 <= py <= H - 1):
                raise EditError(f"strokes[{i}] point ({px}, {py}) outside "
                                f"slice dims ({H}, {W})")
        footprints.append((s["label"],
                           rasterize_stroke((H, W), s["polyline"],
                                            float(s["brush_radius_px"]))))
    out = masks.copy()
    sl = out[k]
    for label, fp in footprints:
        sl[fp] = label
    return out


# ---------------------------------------------------------------------------
# Study persistence
# ---------------------------------------------------------------------------

@dataclass
class Study:
    id: str
    path: Path
    volume: Volume
    masks: np.ndarray          # (D, H, W) uint8
    mask_version: int
    localization: dict         # {"start", "end", "method"}
    lock: threading.Lock


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _save_masks(path: Path, masks: np.ndarray, spacing: Spacing):
    tmp = path.with_suffix(".tmp.rawv")
    save_rawv(tmp, masks, spacing, dtype="uint8")
    os.replace(tmp, path)


def create_study(root, study_id: str, volume: Volume, localization: dict = None,
                 params: SegParams = SegParams()) -> Path:
    """Materialize a study directory: volume, baseline masks, meta, empty log."""
    sdir = Path(root) / study_id
    sdir.mkdir(parents=True, exist_ok=True)
    save_volume(sdir / VOLUME_FILE, volume)
    masks = np.stack(segment_volume(volume, params=params)).astype(np.uint8)
    _save_masks(sdir / MASKS_FILE, masks, volume.spacing)
    _save_masks(sdir / MASKS_INITIAL_FILE, masks, volume.spacing)
    (sdir / EDITS_FILE).write_text("", encoding="utf-8")
    meta = {"id": study_id, "mask_version": 0,
            "localization": localization or {"start": 0,
                                             "end": volume.dims[0] - 1,
                                             "method": "full_range"}}
    _atomic_write(sdir / META_FILE, json.dumps(meta, indent=1).encode())
    return sdir


def load_study(sdir) -> Study:
    sdir = Path(sdir)
    meta = json.loads((sdir / META_FILE).read_text(encoding="utf-8"))
    volume = load_volume(sdir / VOLUME_FILE)
    masks = ingest_mask(sdir / MASKS_FILE, volume.dims)
    return Study(id=meta["id"], path=sdir, volume=volume, masks=masks,
                 mask_version=meta["mask_version"],
                 localization=meta["localization"], lock=threading.Lock())


def replay_edits(sdir) -> np.ndarray:
    """Rebuild the current mask stack from the initial masks + edit log."""
    sdir = Path(sdir)
    volume_dims = load_volume(sdir / VOLUME_FILE).dims
    masks = ingest_mask(sdir / MASKS_INITIAL_FILE, volume_dims)
    with open(sdir / EDITS_FILE, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("kind") == "resegment":
                masks = ingest_mask(sdir / rec["masks_file"], volume_dims)
            else:
                masks = apply_edit_batch(masks, rec["batch"])
    return masks


class StudyStore:
    """Loads studies lazily from a root directory and caches them."""

    def __init__(self, root):
        self.root = Path(root)
        self._studies = {}
        self._lock = threading.Lock()

    def ids(self):
        return sorted(p.name for p in self.root.iterdir()
                      if (p / META_FILE).is_file())

    def get(self, study_id: str) -> Study:
        with self._lock:
            if study_id not in self._studies:
                sdir = self.root / study_id
                if not (sdir / META_FILE).is_file():
                    raise KeyError(study_id)
                self._studies[study_id] = load_study(sdir)
            return self._studies[study_id]

    def persist(self, study: Study, log_record: dict = None):
        """Write masks + meta (and optionally append a log line) to disk."""
        _save_masks(study.path / MASKS_FILE, study.masks, study.volume.spacing)
        if log_record is not None:
            with open(study.path / EDITS_FILE, "a", encoding="utf-8") as f:
                f.write(json.dumps(log_record, sort_keys=True) + "\n")
        meta = {"id": study.id, "mask_version": study.mask_version,
                "localization": study.localization}
        _atomic_write(study.path / META_FILE, json.dumps(meta, indent=1).encode())


# ---------------------------------------------------------------------------
# Slice rendering
# ---------------------------------------------------------------------------

def _plane_slice(arr: np.ndarray, plane: str, index: int) -> np.ndarray:
    D, H, W = arr.shape
    limits = {"axial": D, "coronal": H, "sagittal": W}
    if plane not in limits:
        raise EditError(f"unknown plane {plane!r}")
    if not 0 <= index < limits[plane]:
        raise EditError(f"index {index} outside [0, {limits[plane]}) for {plane}")
    if plane == "axial":
        return arr[index]
    if plane == "coronal":
        return arr[:, index, :]
    return arr[:, :, index]


def render_slice_png(volume: Volume, plane: str, index: int, window) -> bytes:
    level, width = window
    sl = _plane_slice(volume.voxels, plane, index)
    lo = level - width / 2.0
    gray = np.clip((sl - lo) / width, 0.0, 1.0)
    img = Image.fromarray(np.round(gray * 255.0).astype(np.uint8), mode="L")
    buf = BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def render_mask_png(masks: np.ndarray, plane: str, index: int) -> bytes:
    sl = _plane_slice(masks, plane, index)
    img = Image.fromarray(sl.astype(np.uint8), mode="P")
    pal = [0] * 768
    for lab, (r, g, b) in MASK_PALETTE.items():
        pal[3 * lab:3 * lab + 3] = [r, g, b]
    img.putpalette(pal)
    buf = BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# FastAPI app
# ---------------------------------------------------------------------------

from pydantic import BaseModel, Field


class StrokeModel(BaseModel):
    label: int
    brush_radius_px: float
    polyline: list[list[float]] = Field(min_length=1)


class EditBatchModel(BaseModel):
    base_version: int
    slice_index: int
    strokes: list[StrokeModel] = Field(min_length=1)


def create_app(data_dir=None):
    from fastapi import FastAPI, HTTPException, Response

    root = data_dir or os.environ.get("ABDKIT_DATA_DIR")
    if root is None:
        raise EditError("no data directory: pass data_dir or set ABDKIT_DATA_DIR")
    store = StudyStore(root)

    app = FastAPI(title="abdkit refinement service")

    def get_study(study_id: str) -> Study:
        try:
            return store.get(study_id)
        except KeyError:
            raise HTTPException(404, f"unknown study {study_id!r}")

    def parse_window(window: str):
        if window is None:
            return DEFAULT_WINDOW
        try:
            level, width = (float(p) for p in window.split(","))
            WindowSpec(level=level, width=width)
        except (ValueError, TypeError):
            raise HTTPException(422, f"bad window {window!r}; expected 'level,width'")
        return level, width

    @app.get("/api/studies")
    def list_studies():
        out = []
        for sid in store.ids():
            s = get_study(sid)
            out.append({"id": s.id, "dims": list(s.volume.dims),
                        "mask_version": s.mask_version})
        return out

    @app.get("/api/studies/{study_id}")
    def study_detail(study_id: str):
        s = get_study(study_id)
        sp = s.volume.spacing
        return {"id": s.id, "dims": list(s.volume.dims),
                "spacing": [sp.sz, sp.sy, sp.sx],
                "localization": s.localization,
                "mask_version": s.mask_version}

    @app.get("/api/studies/{study_id}/slice")
    def slice_image(study_id: str, plane: str = "axial", index: int = 0,
                    window: str = None):
        s = get_study(study_id)
        try:
            png = render_slice_png(s.volume, plane, index, parse_window(window))
        except EditError as e:
            raise HTTPException(422, str(e))
        return Response(png, media_type="image/png")

    @app.get("/api/studies/{study_id}/mask")
    def mask_image(study_id: str, plane: str = "axial", index: int = 0,
                   format: str = "png"):
        s = get_study(study_id)
        try:
            sl = _plane_slice(s.masks, plane, index)
            if format == "raw":
                return Response(sl.astype(np.uint8).tobytes(),
                                media_type="application/octet-stream",
                                headers={"X-Mask-Shape": f"{sl.shape[0]},{sl.shape[1]}",
                                         "X-Mask-Version": str(s.mask_version)})
            if format != "png":
                raise EditError(f"unknown format {format!r}")
            png = render_mask_png(s.masks, plane, index)
        except EditError as e:
            raise HTTPException(422, str(e))
        return Response(png, media_type="image/png",
                        headers={"X-Mask-Version": str(s.mask_version)})

    @app.post("/api/studies/{study_id}/edits")
    def post_edits(study_id: str, batch: EditBatchModel):
        s = get_study(study_id)
        with s.lock:
            if batch.base_version != s.mask_version:
                raise HTTPException(
                    409, {"error": "version conflict",
                          "current_version": s.mask_version})
            raw = batch.model_dump()
            try:
                new_masks = apply_edit_batch(s.masks, raw)
            except EditError as e:
                raise HTTPException(422, str(e))
            s.masks = new_masks
            s.mask_version += 1
            store.persist(s, {"version": s.mask_version, "timestamp": time.time(),
                              "batch": {"base_version": raw["base_version"],
                                        "slice_index": raw["slice_index"],
                                        "strokes": raw["strokes"]}})
            return {"new_version": s.mask_version}

    @app.post("/api/studies/{study_id}/resegment")
    def resegment(study_id: str):
        s = get_study(study_id)
        with s.lock:
            s.masks = np.stack(segment_volume(s.volume)).astype(np.uint8)
            s.mask_version += 1
            # Log a snapshot so replay stays bit-exact across resegments.
            snap = f"masks_v{s.mask_version}.rawv"
            _save_masks(s.path / snap, s.masks, s.volume.spacing)
            store.persist(s, {"version": s.mask_version, "timestamp": time.time(),
                              "kind": "resegment", "masks_file": snap})
            return {"new_version": s.mask_version}

    @app.get("/api/studies/{study_id}/report")
    def report(study_id: str):
        s = get_study(study_id)
        rep = quantify(list(s.masks), s.volume)
        return Response(report_json(rep), media_type="application/json",
                        headers={"X-Mask-Version": str(s.mask_version)})

    return app


def serve(data_dir=None, host: str = "127.0.0.1", port: int = 8642):
    import uvicorn
    uvicorn.run(create_app(data_dir), host=host, port=port)
