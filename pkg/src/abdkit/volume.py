"""CT volume data model, file I/O, resampling, windowing, and slice extraction.

Volumes are stored dense as (D, H, W) float64 HU grids with per-axis spacing
in millimeters. All operations are pure; a Volume is never mutated after
construction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

HU_MIN = -1024.0
HU_MAX = 3071.0

RAWV_MAGIC = b"RAWV\x00\x00\x00\x01"

_RAWV_DTYPES = {
    "int16": np.int16,
    "float32": np.float32,
    "uint8": np.uint8,
}

# NIfTI-1 datatype codes we accept
_NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 16: np.float32}
_NIFTI_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4, np.dtype(np.float32): 16}


class VolumeFormatError(ValueError):
    """Malformed or unsupported volume file."""


class VolumeValidationError(ValueError):
    """File parsed but contents violate the data model."""


@dataclass(frozen=True)
class Spacing:
    """Voxel spacing in mm: sz along the slice axis, sy rows, sx columns."""

    sz: float
    sy: float
    sx: float

    def __post_init__(self):
        for name, v in (("sz", self.sz), ("sy", self.sy), ("sx", self.sx)):
            if not np.isfinite(v) or v <= 0:
                raise VolumeValidationError(f"spacing {name}={v} must be positive and finite")


@dataclass(frozen=True)
class WindowSpec:
    """HU display window: level (center) and width."""

    level: float = 40.0
    width: float = 400.0

    def __post_init__(self):
        if self.width <= 0:
            raise VolumeValidationError(f"window width must be > 0, got {self.width}")


@dataclass(frozen=True)
class Volume:
    """Dense (D, H, W) scalar grid with spacing and an intensity-domain tag."""

    voxels: np.ndarray
    spacing: Spacing
    intensity_domain: str = "raw_hu"

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.float64)
        if vox.ndim != 3:
            raise VolumeValidationError(f"expected 3D voxel grid, got ndim={vox.ndim}")
        if self.intensity_domain not in ("raw_hu", "normalized_unit"):
            raise VolumeValidationError(f"unknown intensity domain {self.intensity_domain!r}")
        vox.setflags(write=False)
        object.__setattr__(self, "voxels", vox)

    @property
    def dims(self):
        return self.voxels.shape

    def axial(self, k: int) -> np.ndarray:
        return self.voxels[k]


@dataclass(frozen=True)
class ViewSlice2D:
    """A 2D plane extracted from a Volume, with its in-plane spacing (mm)."""

    plane: str
    pixels: np.ndarray
    in_plane_spacing: tuple = (1.0, 1.0)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise VolumeValidationError("ViewSlice2D expects a 2D pixel grid")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def dims(self):
        return self.pixels.shape


# ---------------------------------------------------------------------------
# RAWV format: 8-byte magic, 4-byte LE JSON header length, UTF-8 JSON header
# with dims/spacing/dtype, then little-endian voxel payload.
# ---------------------------------------------------------------------------

def save_rawv(path, array: np.ndarray, spacing: Spacing, dtype: str = "float32"):
    """Write a (D, H, W) array to a RAWV file with the given payload dtype."""
    if dtype not in _RAWV_DTYPES:
        raise VolumeFormatError(f"unsupported RAWV dtype {dtype!r}")
    arr = np.asarray(array)
    if arr.ndim != 3:
        raise VolumeValidationError("RAWV payload must be 3D")
    np_dtype = np.dtype(_RAWV_DTYPES[dtype]).newbyteorder("<")
    header = json.dumps({
        "dims": list(arr.shape),
        "spacing": [spacing.sz, spacing.sy, spacing.sx],
        "dtype": dtype,
    }).encode("utf-8")
    with open(path, "wb") as f:
        f.write(RAWV_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(arr, dtype=np_dtype).tobytes())


def _read_rawv(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12:
        raise VolumeFormatError(f"{path}: truncated RAWV file")
    (hlen,) = struct.unpack_from("<I", data, 8)
    if len(data) < 12 + hlen:
        raise VolumeFormatError(f"{path}: truncated RAWV header")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise VolumeFormatError(f"{path}: bad RAWV header: {e}") from e
    try:
        dims = tuple(int(d) for d in header["dims"])
        sz, sy, sx = (float(s) for s in header["spacing"])
        dtype = header["dtype"]
    except (KeyError, TypeError, ValueError) as e:
        raise VolumeFormatError(f"{path}: incomplete RAWV header: {e}") from e
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise VolumeFormatError(f"{path}: bad dims {dims}")
    if dtype not in _RAWV_DTYPES:
        raise VolumeFormatError(f"{path}: unsupported dtype {dtype!r}")
    np_dtype = np.dtype(_RAWV_DTYPES[dtype]).newbyteorder("<")
    n = dims[0] * dims[1] * dims[2]
    payload = data[12 + hlen:]
    if len(payload) < n * np_dtype.itemsize:
        raise VolumeFormatError(f"{path}: truncated voxel payload "
                                f"({len(payload)} bytes, need {n * np_dtype.itemsize})")
    arr = np.frombuffer(payload[:n * np_dtype.itemsize], dtype=np_dtype).reshape(dims)
    return arr, Spacing(sz, sy, sx)


# ---------------------------------------------------------------------------
# Minimal NIfTI-1 support: uncompressed single-file .nii, little-endian,
# uint8/int16/float32, axis order as stored (3rd dim = slice axis).
# ---------------------------------------------------------------------------

def _read_nifti(path):
    with open(path, "rb") as f:
        hdr = f.read(348)
        if len(hdr) < 348:
            raise VolumeFormatError(f"{path}: truncated NIfTI header")
        magic = hdr[344:348]
        if magic not in (b"n+1\x00", b"ni1\x00"):
            raise VolumeFormatError(f"{path}: bad NIfTI magic {magic!r}")
        (sizeof_hdr,) = struct.unpack_from("<i", hdr, 0)
        if sizeof_hdr != 348:
            raise VolumeFormatError(f"{path}: non-little-endian or malformed NIfTI")
        dim = struct.unpack_from("<8h", hdr, 40)
        if dim[0] < 3:
            raise VolumeFormatError(f"{path}: need 3D NIfTI, got dim[0]={dim[0]}")
        nx, ny, nz = dim[1], dim[2], dim[3]
        (datatype,) = struct.unpack_from("<h", hdr, 70)
        if datatype not in _NIFTI_DTYPES:
            raise VolumeFormatError(f"{path}: unsupported NIfTI datatype {datatype}")
        pixdim = struct.unpack_from("<8f", hdr, 76)
        (vox_offset,) = struct.unpack_from("<f", hdr, 108)
        f.seek(int(vox_offset))
        np_dtype = np.dtype(_NIFTI_DTYPES[datatype]).newbyteorder("<")
        n = nx * ny * nz
        payload = f.read(n * np_dtype.itemsize)
    if len(payload) < n * np_dtype.itemsize:
        raise VolumeFormatError(f"{path}: truncated NIfTI voxel payload")
    # NIfTI stores x fastest: data[x, y, z] in Fortran order. Slice axis = z.
    arr = np.frombuffer(payload, dtype=np_dtype).reshape((nz, ny, nx))
    spacing = Spacing(sz=float(pixdim[3]), sy=float(pixdim[2]), sx=float(pixdim[1]))
    return arr, spacing


def save_nifti(path, array: np.ndarray, spacing: Spacing, dtype=np.int16):
    """Write a minimal single-file NIfTI-1 (.nii), little-endian."""
    arr = np.ascontiguousarray(np.asarray(array), dtype=np.dtype(dtype).newbyteorder("<"))
    if arr.ndim != 3:
        raise VolumeValidationError("NIfTI payload must be 3D")
    code = _NIFTI_CODES[np.dtype(dtype)]
    nz, ny, nx = arr.shape
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, arr.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 0.0, spacing.sx, spacing.sy, spacing.sz, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, 352.0)
    hdr[344:348] = b"n+1\x00"
    with open(path, "wb") as f:
        f.write(bytes(hdr))
        f.write(b"\x00" * 4)
        f.write(arr.tobytes())


def load_array(path):
    """Load a raw (array, Spacing) pair from RAWV or NIfTI without HU checks."""
    path = str(path)
    with open(path, "rb") as f:
        head = f.read(8)
    if head == RAWV_MAGIC:
        return _read_rawv(path)
    return _read_nifti(path)


def load_volume(path) -> Volume:
    """Load a raw-HU Volume from a RAWV or uncompressed NIfTI-1 file."""
    arr, spacing = load_array(path)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.min() < HU_MIN or arr.max() > HU_MAX:
        raise VolumeValidationError(
            f"{path}: HU values outside [{HU_MIN:g}, {HU_MAX:g}] "
            f"(got [{arr.min():g}, {arr.max():g}])")
    return Volume(voxels=arr, spacing=spacing, intensity_domain="raw_hu")


def save_volume(path, v: Volume, dtype: str = "float32"):
    """Write a Volume to RAWV."""
    save_rawv(path, v.voxels, v.spacing, dtype=dtype)


# ---------------------------------------------------------------------------
# Resampling, windowing, view extraction
# ---------------------------------------------------------------------------

def _linear_coords(n_out: int, n_in: int):
    """Align-corners-false sample coordinates: i -> (i+0.5)*(in/out) - 0.5."""
    c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(c, 0.0, n_in - 1.0)


def resample_trilinear(v: Volume, target_dims) -> Volume:
    """Trilinear resample to target (D', H', W'); physical extent is preserved."""
    td, th, tw = (int(x) for x in target_dims)
    if td < 1 or th < 1 or tw < 1:
        raise VolumeValidationError(f"target dims must be >= 1, got {target_dims}")
    D, H, W = v.dims
    out = resample_trilinear_grid(v.voxels, (td, th, tw))
    sp = Spacing(sz=v.spacing.sz * D / td,
                 sy=v.spacing.sy * H / th,
                 sx=v.spacing.sx * W / tw)
    return Volume(voxels=out, spacing=sp, intensity_domain=v.intensity_domain)


def resample_trilinear_grid(vox: np.ndarray, target_dims) -> np.ndarray:
    """Trilinear interpolation of a 3D grid onto a new grid (align-corners-false)."""
    D, H, W = vox.shape
    td, th, tw = target_dims
    zc = _linear_coords(td, D)
    yc = _linear_coords(th, H)
    xc = _linear_coords(tw, W)

    z0 = np.floor(zc).astype(np.intp); z1 = np.minimum(z0 + 1, D - 1); fz = zc - z0
    y0 = np.floor(yc).astype(np.intp); y1 = np.minimum(y0 + 1, H - 1); fy = yc - y0
    x0 = np.floor(xc).astype(np.intp); x1 = np.minimum(x0 + 1, W - 1); fx = xc - x0

    # Interpolate axis by axis to keep memory linear in the output size.
    a = vox[z0] * (1 - fz)[:, None, None] + vox[z1] * fz[:, None, None]
    a = a[:, y0] * (1 - fy)[None, :, None] + a[:, y1] * fy[None, :, None]
    a = a[:, :, x0] * (1 - fx)[None, None, :] + a[:, :, x1] * fx[None, None, :]
    return a


def window_normalize(v: Volume, w: WindowSpec = WindowSpec()) -> Volume:
    """Map HU through the display window onto [0, 1] with clamping."""
    if v.intensity_domain != "raw_hu":
        raise VolumeValidationError("window_normalize expects a raw-HU volume")
    lo = w.level - w.width / 2.0
    out = np.clip((v.voxels - lo) / w.width, 0.0, 1.0)
    return Volume(voxels=out, spacing=v.spacing, intensity_domain="normalized_unit")


def extract_center_views(v: Volume):
    """Center coronal (D x W) and sagittal (D x H) planes of the volume."""
    D, H, W = v.dims
    cor = ViewSlice2D(plane="coronal", pixels=v.voxels[:, H // 2, :],
                      in_plane_spacing=(v.spacing.sz, v.spacing.sx))
    sag = ViewSlice2D(plane="sagittal", pixels=v.voxels[:, :, W // 2],
                      in_plane_spacing=(v.spacing.sz, v.spacing.sy))
    return cor, sag


def extract_axial_range(v: Volume, start: int, end: int):
    """Axial slices [start, end], inclusive, in order."""
    D, H, W = v.dims
    if not (0 <= start <= end < D):
        raise VolumeValidationError(
            f"invalid axial range [{start}, {end}] for D={D}")
    sp = (v.spacing.sy, v.spacing.sx)
    return [ViewSlice2D(plane="axial", pixels=v.voxels[k], in_plane_spacing=sp)
            for k in range(start, end + 1)]
