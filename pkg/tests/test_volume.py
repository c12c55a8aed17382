import numpy as np
import pytest

from abdkit.volume import (Spacing, Volume, VolumeFormatError,
                           VolumeValidationError, WindowSpec,
                           extract_axial_range, extract_center_views,
                           load_array, load_volume, resample_trilinear,
                           save_nifti, save_rawv, save_volume,
                           window_normalize)


def random_volume(rng, dims=(6, 8, 10), spacing=(3.0, 1.5, 1.5)):
    vox = rng.uniform(-1000, 1500, size=dims)
    return Volume(voxels=vox, spacing=Spacing(*spacing))


def test_rawv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    v = random_volume(rng)
    p = tmp_path / "v.rawv"
    save_volume(p, v)
    back = load_volume(p)
    assert back.dims == v.dims
    assert back.spacing == v.spacing
    np.testing.assert_allclose(back.voxels, v.voxels, atol=1e-3)  # float32 payload


def test_rawv_uint8_and_int16(tmp_path):
    arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    save_rawv(tmp_path / "m.rawv", arr, Spacing(1, 1, 1), dtype="uint8")
    back, sp = load_array(tmp_path / "m.rawv")
    assert back.dtype == np.uint8
    np.testing.assert_array_equal(back, arr)

    arr16 = (np.arange(24).reshape(2, 3, 4) - 12).astype(np.int16)
    save_rawv(tmp_path / "i.rawv", arr16, Spacing(2, 1, 1), dtype="int16")
    back, sp = load_array(tmp_path / "i.rawv")
    np.testing.assert_array_equal(back, arr16)
    assert sp.sz == 2.0


def test_rawv_truncated_rejected(tmp_path):
    p = tmp_path / "bad.rawv"
    save_rawv(p, np.zeros((2, 2, 2)), Spacing(1, 1, 1))
    data = p.read_bytes()
    p.write_bytes(data[:-3])
    with pytest.raises(VolumeFormatError):
        load_array(p)


def test_rawv_bad_header_rejected(tmp_path):
    p = tmp_path / "bad.rawv"
    p.write_bytes(b"RAWV\0\0\0\1" + b"\x04\x00\x00\x00" + b"nope")
    with pytest.raises(VolumeFormatError):
        load_array(p)


def test_nifti_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    arr = rng.integers(-1000, 2000, size=(5, 6, 7)).astype(np.int16)
    p = tmp_path / "v.nii"
    # spacings exactly representable in the float32 pixdim header fields
    save_nifti(p, arr, Spacing(3.0, 0.75, 0.75))
    back, sp = load_array(p)
    np.testing.assert_array_equal(back, arr)
    assert (sp.sz, sp.sy, sp.sx) == (3.0, 0.75, 0.75)


def test_hu_range_enforced(tmp_path):
    p = tmp_path / "v.rawv"
    save_rawv(p, np.full((2, 2, 2), 5000.0), Spacing(1, 1, 1))
    with pytest.raises(VolumeValidationError):
        load_volume(p)


def test_resample_identity():
    rng = np.random.default_rng(2)
    v = random_volume(rng)
    out = resample_trilinear(v, v.dims)
    np.testing.assert_allclose(out.voxels, v.voxels, atol=1e-6)


def test_resample_extent_preserved():
    rng = np.random.default_rng(3)
    v = random_volume(rng, dims=(10, 12, 14))
    out = resample_trilinear(v, (25, 6, 28))
    for n_in, n_out, s_in, s_out in [
            (10, 25, v.spacing.sz, out.spacing.sz),
            (12, 6, v.spacing.sy, out.spacing.sy),
            (14, 28, v.spacing.sx, out.spacing.sx)]:
        assert abs(n_in * s_in - n_out * s_out) < 1e-9


def test_resample_linear_ramp():
    D = 16
    ramp = np.arange(D, dtype=np.float64)[:, None, None] * np.ones((1, 4, 4))
    v = Volume(voxels=ramp, spacing=Spacing(2.0, 1.0, 1.0))
    out = resample_trilinear(v, (2 * D, 4, 4))
    # align-corners-false: output sample i sits at (i + 0.5)/2 - 0.5 on the
    # input grid; linear interpolation reproduces the ramp except where the
    # source coordinate clamps at the edges.
    for i in range(2 * D):
        c = (i + 0.5) * D / (2 * D) - 0.5
        expected = min(max(c, 0.0), D - 1)
        assert abs(out.voxels[i, 2, 2] - expected) < 1e-6


def test_window_normalize_clamps():
    v = Volume(voxels=np.array([[[-500.0, 40.0, 1000.0]]]),
               spacing=Spacing(1, 1, 1))
    out = window_normalize(v, WindowSpec(level=40, width=400))
    np.testing.assert_allclose(out.voxels[0, 0], [0.0, 0.5, 1.0])
    assert out.intensity_domain == "normalized_unit"


def test_extract_center_views_shapes():
    rng = np.random.default_rng(4)
    v = random_volume(rng, dims=(6, 8, 10))
    cor, sag = extract_center_views(v)
    assert cor.plane == "coronal" and cor.pixels.shape == (6, 10)
    assert sag.plane == "sagittal" and sag.pixels.shape == (6, 8)
    np.testing.assert_array_equal(cor.pixels, v.voxels[:, 4, :])
    np.testing.assert_array_equal(sag.pixels, v.voxels[:, :, 5])


def test_extract_axial_range():
    rng = np.random.default_rng(5)
    v = random_volume(rng, dims=(6, 8, 10))
    slices = extract_axial_range(v, 2, 4)
    assert len(slices) == 3
    assert all(s.plane == "axial" for s in slices)
    np.testing.assert_array_equal(np.stack([s.pixels for s in slices]),
                                  v.voxels[2:5])
    with pytest.raises(VolumeValidationError):
        extract_axial_range(v, 4, 2)
    with pytest.raises(VolumeValidationError):
        extract_axial_range(v, 0, 6)


def test_spacing_validation():
    with pytest.raises(VolumeValidationError):
        Spacing(0.0, 1.0, 1.0)
    with pytest.raises(VolumeValidationError):
        WindowSpec(level=40, width=0)
