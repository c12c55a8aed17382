import numpy as np
import pytest

from abdkit import autodiff as ad
from abdkit import locnet as ln
from abdkit.autodiff import Tensor
from abdkit.heatmap import LocLabel
from abdkit.phantom import PhantomSpec, generate


TINY = ln.LocNetConfig(input_dims=(32, 16, 16), channels_3d=(2, 4, 4, 8),
                       view_channels=(2, 4, 4, 8), d_k=8, heatmap_len=32,
                       sigma=1.5, seed=0)


def tiny_volume(seed=0):
    spec = PhantomSpec(dims=(32, 16, 16), spacing=(3.0, 8.0, 8.0),
                       abdomen_start=8, abdomen_end=24,
                       body_ry_mm=48.0, body_rx_mm=50.0, seed=seed)
    return generate(spec)


def softmax_np(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def test_config_validation():
    with pytest.raises(ln.ConfigError):
        ln.LocNetConfig(stride_plan=((2, 2, 2), (1, 1, 1), (2, 2, 2),
                                     (2, 2, 2), (1, 2, 2)))
    with pytest.raises(ln.ConfigError):
        ln.LocNetConfig(heatmap_len=1)
    with pytest.raises(ln.ConfigError):
        ln.LocNetConfig(view_mode="both")
    with pytest.raises(ln.ConfigError):
        ln.LocNetConfig(view_channels=(8, 16, 32, 32))


def test_fuse_matches_numpy_oracle():
    rng = np.random.default_rng(0)
    fv, fc, fs = (rng.normal(size=(3, 8)) for _ in range(3))

    def attn(q, k, v):
        return softmax_np(q @ k.T / np.sqrt(k.shape[1])) @ v

    want = attn(fc, fv, fv) + attn(fs, fv, fv) + fv
    got = ln.fuse_multiview(Tensor(fv), Tensor(fc), Tensor(fs)).data
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_fuse_zero_value():
    z = Tensor(np.zeros((4, 6)))
    q = Tensor(np.random.default_rng(1).normal(size=(4, 6)))
    np.testing.assert_array_equal(ln.fuse_multiview(z, q, q).data, np.zeros((4, 6)))


def test_fuse_single_token():
    fv = Tensor(np.array([[1.0, -2.0, 0.5]]))
    q = Tensor(np.array([[9.0, 9.0, 9.0]]))
    np.testing.assert_allclose(ln.fuse_multiview(fv, q, q).data, 3 * fv.data,
                               atol=1e-12)


def test_fuse_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        ln.fuse_multiview(Tensor(np.zeros((3, 4))), Tensor(np.zeros((2, 4))),
                          Tensor(np.zeros((3, 4))))


def test_build_deterministic():
    m1, m2 = ln.build(TINY), ln.build(TINY)
    assert m1.n_params() == m2.n_params()
    for name in m1.params:
        np.testing.assert_array_equal(m1.params[name].data, m2.params[name].data)


def test_forward_probability_outputs():
    model = ln.build(TINY)
    volume = tiny_volume()[0]
    vol, cor, sag = ln.preprocess(volume, TINY)
    hm_s, hm_e = model.forward(Tensor(vol), Tensor(cor), Tensor(sag))
    for hm in (hm_s, hm_e):
        assert hm.shape == (TINY.heatmap_len,)
        assert (hm.data >= 0).all()
        assert hm.data.sum() == pytest.approx(1.0, abs=1e-6)
    assert not np.array_equal(hm_s.data, hm_e.data)  # distinct heads


def test_volume_only_ignores_views():
    cfg = ln.LocNetConfig(**{**TINY.__dict__, "view_mode": "volume_only"})
    model = ln.build(cfg)
    volume = tiny_volume()[0]
    vol, cor, sag = ln.preprocess(volume, cfg)
    a = model.forward(Tensor(vol))[0].data
    b = model.forward(Tensor(vol), Tensor(cor * 0 + 9.0), Tensor(sag))[0].data
    np.testing.assert_array_equal(a, b)


def test_predict_contract():
    model = ln.build(TINY)
    volume = tiny_volume()[0]
    p1 = ln.predict(model, volume)
    p2 = ln.predict(model, volume)
    assert 0 <= p1.start <= p1.end < volume.dims[0]
    assert (p1.start, p1.end) == (p2.start, p2.end)


def test_train_loss_decreases_and_lr_zero():
    volume, label, _ = tiny_volume()
    case = ln.prepare_case(volume, label, TINY)

    model = ln.build(TINY)
    before = {k: p.data.copy() for k, p in model.params.items()}
    ln.train(model, [case], iterations=3, lr=0.0)
    for k, p in model.params.items():
        np.testing.assert_array_equal(p.data, before[k])

    model = ln.build(TINY)
    ckpt = ln.train(model, [case], iterations=60)
    hist = ckpt.meta["loss_history"]
    assert hist[-1] < hist[0]
    assert len(hist) == 60


def test_train_empty_dataset():
    with pytest.raises(ln.TrainingError):
        ln.train(ln.build(TINY), [], iterations=1)


def test_checkpoint_round_trip(tmp_path):
    volume, label, _ = tiny_volume()
    model = ln.build(TINY)
    ckpt = ln.train(model, [ln.prepare_case(volume, label, TINY)], iterations=2)
    p = tmp_path / "m.ckpt"
    ln.save_checkpoint(p, ckpt)
    back = ln.load_checkpoint(p)
    assert back.config == TINY
    for name, t in model.params.items():
        # blob payloads are float32 by format
        np.testing.assert_allclose(back.params[name].data, t.data, rtol=2e-7,
                                   atol=1e-7)
    a, b = ln.predict(model, volume), ln.predict(back, volume)
    assert (a.start, a.end) == (b.start, b.end)


def test_heatmap_index_mapping():
    assert ln.heatmap_index(0, 128, 128) == 0
    assert ln.heatmap_index(127, 128, 128) == 127
    assert ln.heatmap_index(64, 128, 64) == 32
