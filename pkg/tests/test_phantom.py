import json

import numpy as np
import pytest

from abdkit.phantom import (DEFAULT_HU, PhantomSpec, PhantomSpecError,
                            generate, generate_corpus,
                            generate_view_dependent, load_manifest)
from abdkit.segment import LABEL_MUSCLE, LABEL_SFA, LABEL_VFA
from abdkit.volume import load_volume


def small_spec(**kw):
    base = dict(dims=(24, 48, 48), spacing=(4.0, 3.0, 3.0),
                abdomen_start=6, abdomen_end=17,
                body_ry_mm=52.0, body_rx_mm=54.0, seed=3)
    base.update(kw)
    return PhantomSpec(**base)


def test_spec_validation():
    with pytest.raises(PhantomSpecError):
        small_spec(abdomen_start=20, abdomen_end=30)
    with pytest.raises(PhantomSpecError):
        small_spec(body_ry_mm=500.0)
    with pytest.raises(PhantomSpecError):
        small_spec(muscle_thickness_mm=0.0)


def test_determinism():
    v1, l1, m1 = generate(small_spec(noise_sigma_hu=15.0))
    v2, l2, m2 = generate(small_spec(noise_sigma_hu=15.0))
    np.testing.assert_array_equal(v1.voxels, v2.voxels)
    assert l1 == l2
    np.testing.assert_array_equal(np.stack(m1), np.stack(m2))


def test_masks_noise_free():
    clean = generate(small_spec())[2]
    noisy = generate(small_spec(noise_sigma_hu=25.0))[2]
    np.testing.assert_array_equal(np.stack(clean), np.stack(noisy))


def test_mask_classes_match_analytic_geometry():
    spec = small_spec()
    volume, label, masks = generate(spec)
    sz, sy, sx = spec.spacing
    D, H, W = spec.dims
    rng = np.random.default_rng(0)
    ry, rx = spec.body_ry_mm, spec.body_rx_mm
    for k in range(label.start_idx, label.end_idx + 1):
        m = masks[k]
        for _ in range(200):
            y, x = int(rng.integers(0, H)), int(rng.integers(0, W))
            ym = (y - (H - 1) / 2.0) * sy
            xm = (x - (W - 1) / 2.0) * sx
            in_body = (ym / ry) ** 2 + (xm / rx) ** 2 <= 1.0
            fr_y, fr_x = ry - spec.sfa_thickness_mm, rx - spec.sfa_thickness_mm
            in_fat_inner = (ym / fr_y) ** 2 + (xm / fr_x) ** 2 <= 1.0
            if in_body and not in_fat_inner:
                assert m[y, x] == LABEL_SFA
            elif not in_body:
                assert m[y, x] == 0


def test_hu_values_in_regions():
    spec = small_spec()
    volume, label, masks = generate(spec)
    k = (label.start_idx + label.end_idx) // 2
    sl, m = volume.axial(k), masks[k]
    assert (sl[m == LABEL_SFA] == DEFAULT_HU["fat"]).all()
    assert (sl[m == LABEL_MUSCLE] == DEFAULT_HU["muscle"]).all()
    assert (sl[m == LABEL_VFA] == DEFAULT_HU["fat"]).all()


def test_taper_outside_abdomen():
    spec = small_spec()
    volume, label, masks = generate(spec)
    inside_area = (volume.axial(label.start_idx) > -500).sum()
    edge_area = (volume.axial(0) > -500).sum()
    assert 0 < edge_area < inside_area
    # no SFA ring outside the abdominal range
    assert not (masks[0] == LABEL_SFA).any()


def test_sfa_area_within_boundary_band():
    spec = small_spec()
    volume, label, masks = generate(spec)
    sz, sy, sx = spec.spacing
    ry, rx = spec.body_ry_mm, spec.body_rx_mm
    iry, irx = ry - spec.sfa_thickness_mm, rx - spec.sfa_thickness_mm
    analytic = np.pi * (ry * rx - iry * irx)
    # Ramanujan approximation for the outer ellipse perimeter
    h = ((ry - rx) / (ry + rx)) ** 2
    perim = np.pi * (ry + rx) * (1 + 3 * h / (10 + np.sqrt(4 - 3 * h)))
    diag = np.hypot(sy, sx)
    for k in range(label.start_idx, label.end_idx + 1):
        area = (masks[k] == LABEL_SFA).sum() * sy * sx
        assert abs(area - analytic) <= perim * diag


def test_view_dependent_means_uninformative():
    spec = small_spec(vfa_blob_count=0)
    volume, label, masks = generate_view_dependent(spec)
    means = volume.voxels.mean(axis=(1, 2))
    assert np.ptp(means) < 1e-9
    # but the coronal center plane sees the boundary
    H = spec.dims[1]
    cor = volume.voxels[:, H // 2, :]
    bright = (cor > 200).any(axis=1)
    inside = np.zeros(spec.dims[0], bool)
    inside[label.start_idx:label.end_idx + 1] = True
    assert (bright == inside).all()


def test_corpus_manifest(tmp_path):
    man = generate_corpus(3, tmp_path, base_spec=small_spec(), seed=5,
                          start_jitter=2, end_jitter=2, radius_jitter_mm=1.0)
    assert man["version"] == 1
    assert len(man["cases"]) == 3
    loaded = load_manifest(tmp_path / "manifest.json")
    # in-memory manifest holds tuples where JSON holds lists
    assert loaded == json.loads(json.dumps(man, default=list))
    for c in man["cases"]:
        v = load_volume(tmp_path / c["volume"])
        assert v.dims == (24, 48, 48)
        lab = c["label"]
        assert 0 < lab["start"] < lab["end"] < 24


def test_corpus_determinism(tmp_path):
    m1 = generate_corpus(2, tmp_path / "a", base_spec=small_spec(), seed=9)
    m2 = generate_corpus(2, tmp_path / "b", base_spec=small_spec(), seed=9)
    for c1, c2 in zip(m1["cases"], m2["cases"]):
        assert c1["label"] == c2["label"]
        v1 = load_volume(tmp_path / "a" / c1["volume"])
        v2 = load_volume(tmp_path / "b" / c2["volume"])
        np.testing.assert_array_equal(v1.voxels, v2.voxels)


def test_corpus_rejects_bad_args(tmp_path):
    with pytest.raises(PhantomSpecError):
        generate_corpus(0, tmp_path)
    with pytest.raises(PhantomSpecError):
        generate_corpus(1, tmp_path, family="nope")
