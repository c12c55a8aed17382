"""Multi-view abdomen localization network.

Stage layout: a 3D residual backbone reduces the slice axis by 16x, two
lightweight four-stage 2D encoders process the center coronal/sagittal
planes, dual cross-attention fuses the views (volume features as key/value,
view features as queries) with a residual add, and two affine+softmax heads
emit start/end heatmaps over slice positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blob import save_blob, load_blob
from .heatmap import LocLabel, encode_gaussian, encode_onehot, decode
from .volume import Volume, WindowSpec, extract_center_views, resample_trilinear, window_normalize


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


DEFAULT_STRIDE_PLAN = ((2, 2, 2), (1, 1, 1), (2, 2, 2), (2, 2, 2), (2, 2, 2))


@dataclass(frozen=True)
class LocNetConfig:
    """Toy-scale default; the full-size 512x64x64 pipeline is a valid config."""

    input_dims: tuple = (128, 32, 32)
    channels_3d: tuple = (8, 16, 32, 64)
    # stem + 4 stages; slice-axis strides must multiply to 16
    stride_plan: tuple = DEFAULT_STRIDE_PLAN
    view_channels: tuple = (8, 16, 32, 64)
    d_k: int = 32
    heatmap_len: int = 128
    sigma: float = 2.0
    target_mode: str = "gaussian"  # or "onehot"
    view_mode: str = "multi_view"  # or "volume_only"
    raw_qkv: bool = False
    window: tuple = (40.0, 400.0)
    seed: int = 0

    def __post_init__(self):
        if len(self.stride_plan) != 5:
            raise ConfigError("stride_plan needs 5 entries (stem + 4 stages)")
        prod = 1
        for s in self.stride_plan:
            prod *= s[0]
        if prod != 16:
            raise ConfigError(f"slice-axis stride product must be 16, got {prod}")
        if len(self.channels_3d) != 4 or len(self.view_channels) != 4:
            raise ConfigError("channels_3d and view_channels need 4 stages")
        if self.view_channels[-1] != self.channels_3d[-1]:
            raise ConfigError("final view channels must match final 3D channels "
                              "(residual fusion requires equal feature dims)")
        if self.d_k <= 0:
            raise ConfigError("d_k must be positive")
        if self.heatmap_len < 2:
            raise ConfigError("heatmap_len must be >= 2")
        if self.input_dims[0] % 16 != 0:
            raise ConfigError("input slice count must be divisible by 16")
        if self.view_mode not in ("multi_view", "volume_only"):
            raise ConfigError(f"unknown view_mode {self.view_mode!r}")
        if self.target_mode not in ("gaussian", "onehot"):
            raise ConfigError(f"unknown target_mode {self.target_mode!r}")

    @property
    def d_prime(self):
        return self.input_dims[0] // 16


def fuse_multiview(f_vol: Tensor, f_cor: Tensor, f_sag: Tensor, d_k: int = None) -> Tensor:
    """Literal dual cross-attention fusion:
    softmax(Fc Fv^T / sqrt(d_k)) Fv + softmax(Fs Fv^T / sqrt(d_k)) Fv + Fv."""
    if f_vol.shape != f_cor.shape or f_vol.shape != f_sag.shape:
        raise ad.ShapeError(
            f"token shapes differ: {f_vol.shape}/{f_cor.shape}/{f_sag.shape}")
    if d_k is not None and d_k != f_vol.shape[1]:
        # Scale override: rebuild scaled attention by hand for the stated d_k.
        scores_c = ad.scale(ad.matmul(f_cor, ad.transpose(f_vol)), 1.0 / np.sqrt(d_k))
        scores_s = ad.scale(ad.matmul(f_sag, ad.transpose(f_vol)), 1.0 / np.sqrt(d_k))
        att_c = ad.matmul(ad.softmax(scores_c, axis=-1), f_vol)
        att_s = ad.matmul(ad.softmax(scores_s, axis=-1), f_vol)
    else:
        att_c = ad.scaled_dot_attention(f_cor, f_vol, f_vol)
        att_s = ad.scaled_dot_attention(f_sag, f_vol, f_vol)
    return ad.add(ad.add(att_c, att_s), f_vol)


class LocNet:
    """Parameter container plus forward passes; built via `build`."""

    def __init__(self, config: LocNetConfig, params: dict):
        self.config = config
        self.params = params

    def parameters(self):
        return list(self.params.values())

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    # -- forward pieces ----------------------------------------------------

    def _backbone3d(self, x: Tensor) -> Tensor:
        """(1,1,D,H,W) -> (D', C) slice tokens, mean-pooled over H'xW'."""
        p = self.params
        cfg = self.config
        h = ad.relu(ad.conv3d(x, p["stem.k"], stride=cfg.stride_plan[0],
                              padding=1, bias=p["stem.b"]))
        for g in range(4):
            stride = cfg.stride_plan[g + 1]
            for b in range(2):
                pre = f"s{g}.b{b}"
                st = stride if b == 0 else (1, 1, 1)
                y = ad.relu(ad.conv3d(h, p[f"{pre}.c1.k"], stride=st,
                                      padding=1, bias=p[f"{pre}.c1.b"]))
                y = ad.conv3d(y, p[f"{pre}.c2.k"], stride=1, padding=1,
                              bias=p[f"{pre}.c2.b"])
                if f"{pre}.proj.k" in p:
                    sc = ad.conv3d(h, p[f"{pre}.proj.k"], stride=st, padding=0,
                                   bias=p[f"{pre}.proj.b"])
                else:
                    sc = h
                h = ad.relu(ad.add(y, sc))
        pooled = ad.tmean(h, axis=(3, 4))          # (1, C, D')
        c = self.config.channels_3d[-1]
        return ad.transpose(ad.reshape(pooled, (c, cfg.d_prime)))

    def _view_encoder(self, x: Tensor, prefix: str) -> Tensor:
        """(1,1,D,P) -> (D', C) tokens; 4 single-conv stages, stride 2."""
        p = self.params
        h = x
        for g in range(4):
            h = ad.relu(ad.conv2d(h, p[f"{prefix}.s{g}.k"], stride=2, padding=1,
                                  bias=p[f"{prefix}.s{g}.b"]))
        pooled = ad.tmean(h, axis=3)               # (1, C, D')
        c = self.config.view_channels[-1]
        return ad.transpose(ad.reshape(pooled, (c, self.config.d_prime)))

    def _fuse(self, f_vol, f_cor, f_sag):
        if self.config.raw_qkv:
            return fuse_multiview(f_vol, f_cor, f_sag)
        p = self.params
        scale = 1.0 / np.sqrt(self.config.d_k)

        def branch(f_q, wq, wk):
            q = ad.matmul(f_q, p[wq])
            k = ad.matmul(f_vol, p[wk])
            w = ad.softmax(ad.scale(ad.matmul(q, ad.transpose(k)), scale), axis=-1)
            return ad.matmul(w, f_vol)

        att_c = branch(f_cor, "fuse.wq_cor", "fuse.wk_cor")
        att_s = branch(f_sag, "fuse.wq_sag", "fuse.wk_sag")
        return ad.add(ad.add(att_c, att_s), f_vol)

    def forward(self, vol: Tensor, cor: Tensor = None, sag: Tensor = None):
        """Returns (heatmap_start, heatmap_end) probability vectors."""
        f_vol = self._backbone3d(vol)
        if self.config.view_mode == "multi_view":
            if cor is None or sag is None:
                raise ad.ShapeError("multi_view forward requires coronal and sagittal inputs")
            f_cor = self._view_encoder(cor, "view_cor")
            f_sag = self._view_encoder(sag, "view_sag")
            fused = self._fuse(f_vol, f_cor, f_sag)
        else:
            fused = f_vol
        flat = ad.flatten(fused)
        p = self.params
        hm_s = ad.softmax(ad.linear(flat, p["head_start.w"], p["head_start.b"]))
        hm_e = ad.softmax(ad.linear(flat, p["head_end.w"], p["head_end.b"]))
        return hm_s, hm_e


def build(config: LocNetConfig) -> LocNet:
    """Initialize a LocNet with He fan-in scaling, deterministic per seed."""
    rng = np.random.default_rng(config.seed)
    params = {}

    def he(name, shape, fan_in):
        params[name] = Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape),
                              requires_grad=True)

    def zeros(name, shape):
        params[name] = Tensor(np.zeros(shape), requires_grad=True)

    ch = config.channels_3d
    he("stem.k", (ch[0], 1, 3, 3, 3), 27)
    zeros("stem.b", (ch[0],))
    in_ch = ch[0]
    for g in range(4):
        out_ch = ch[g]
        stride = config.stride_plan[g + 1]
        for b in range(2):
            pre = f"s{g}.b{b}"
            block_in = in_ch if b == 0 else out_ch
            st = stride if b == 0 else (1, 1, 1)
            he(f"{pre}.c1.k", (out_ch, block_in, 3, 3, 3), block_in * 27)
            zeros(f"{pre}.c1.b", (out_ch,))
            he(f"{pre}.c2.k", (out_ch, out_ch, 3, 3, 3), out_ch * 27)
            zeros(f"{pre}.c2.b", (out_ch,))
            if block_in != out_ch or st != (1, 1, 1):
                he(f"{pre}.proj.k", (out_ch, block_in, 1, 1, 1), block_in)
                zeros(f"{pre}.proj.b", (out_ch,))
        in_ch = out_ch

    for prefix in ("view_cor", "view_sag"):
        vin = 1
        for g in range(4):
            vout = config.view_channels[g]
            he(f"{prefix}.s{g}.k", (vout, vin, 3, 3), vin * 9)
            zeros(f"{prefix}.s{g}.b", (vout,))
            vin = vout

    c = ch[-1]
    if not config.raw_qkv:
        for name in ("fuse.wq_cor", "fuse.wk_cor", "fuse.wq_sag", "fuse.wk_sag"):
            he(name, (c, config.d_k), c)

    # Heads start small so the initial softmax is near uniform; He-scale
    # logits would saturate it and stall KL training from the first step.
    flat_dim = config.d_prime * c
    for head in ("head_start", "head_end"):
        params[f"{head}.w"] = Tensor(
            rng.normal(0.0, 1e-3, size=(flat_dim, config.heatmap_len)),
            requires_grad=True)
        zeros(f"{head}.b", (config.heatmap_len,))

    return LocNet(config, params)


# ---------------------------------------------------------------------------
# Data preparation, training, inference
# ---------------------------------------------------------------------------

@dataclass
class PreparedCase:
    """Preprocessed network inputs plus the heatmap-grid label."""

    vol: np.ndarray          # (1,1,D,H,W) normalized
    cor: np.ndarray          # (1,1,D,W)
    sag: np.ndarray          # (1,1,D,H)
    label: LocLabel          # indices on the heatmap grid
    orig_label: LocLabel = None
    orig_depth: int = 0
    s_ori: float = 1.0


def heatmap_index(orig_idx: int, orig_depth: int, length: int) -> int:
    """Map an original-grid slice index to the heatmap grid by physical position."""
    return min(length - 1, max(0, round(orig_idx * length / orig_depth)))


def preprocess(v: Volume, config: LocNetConfig) -> tuple:
    """Resample + window + center views; returns network-shaped arrays."""
    res = resample_trilinear(v, config.input_dims)
    norm = window_normalize(res, WindowSpec(*config.window))
    cor, sag = extract_center_views(norm)
    d, h, w = config.input_dims
    return (norm.voxels.reshape(1, 1, d, h, w),
            cor.pixels.reshape(1, 1, d, w),
            sag.pixels.reshape(1, 1, d, h))


def prepare_case(v: Volume, label: LocLabel, config: LocNetConfig) -> PreparedCase:
    vol, cor, sag = preprocess(v, config)
    d_orig = v.dims[0]
    hm_label = LocLabel(heatmap_index(label.start_idx, d_orig, config.heatmap_len),
                        heatmap_index(label.end_idx, d_orig, config.heatmap_len))
    return PreparedCase(vol=vol, cor=cor, sag=sag, label=hm_label,
                        orig_label=label, orig_depth=d_orig, s_ori=v.spacing.sz)


@dataclass
class Checkpoint:
    config: LocNetConfig
    tensors: dict
    meta: dict = field(default_factory=dict)


def _encode_target(idx: int, config: LocNetConfig) -> np.ndarray:
    if config.target_mode == "onehot":
        return encode_onehot(idx, config.heatmap_len)
    return encode_gaussian(idx, config.heatmap_len, config.sigma)


def train(model: LocNet, dataset, iterations: int, lr: float = 1e-3) -> Checkpoint:
    """Adam training on KL(target || predicted) for both endpoint heatmaps.

    One iteration = one update on one case, cycling the dataset in order.
    """
    if not dataset:
        raise TrainingError("empty dataset")
    cfg = model.config
    for case in dataset:
        if case.label.end_idx >= cfg.heatmap_len:
            raise TrainingError(f"label {case.label} outside heatmap length {cfg.heatmap_len}")

    targets = [( _encode_target(c.label.start_idx, cfg),
                 _encode_target(c.label.end_idx, cfg)) for c in dataset]
    params = model.parameters()
    state = ad.AdamState(lr=lr)
    history = []
    for it in range(iterations):
        case = dataset[it % len(dataset)]
        t_start, t_end = targets[it % len(dataset)]
        model.zero_grad()
        try:
            hm_s, hm_e = model.forward(Tensor(case.vol), Tensor(case.cor), Tensor(case.sag))
            loss = ad.add(ad.kl_div(t_start, hm_s), ad.kl_div(t_end, hm_e))
            ad.backward(loss)
        except ad.NonFiniteError as e:
            raise TrainingError(f"non-finite loss at iteration {it}: {e}") from e
        history.append(loss.item())
        if lr != 0.0:
            ad.adam_step(params, [p.grad for p in params], state)
    return Checkpoint(config=cfg,
                      tensors={k: v.data for k, v in model.params.items()},
                      meta={"iterations": iterations,
                            "final_loss": history[-1] if history else None,
                            "loss_history": history})


@dataclass(frozen=True)
class LocPrediction:
    start: int
    end: int
    start_hm: int
    end_hm: int
    s_hm: float
    s_ori: float
    swapped: bool = False


def predict(model: LocNet, v: Volume) -> LocPrediction:
    """Run the full preprocessing + forward chain on a raw volume."""
    vol, cor, sag = preprocess(v, model.config)
    if model.config.view_mode == "multi_view":
        hm_s, hm_e = model.forward(Tensor(vol), Tensor(cor), Tensor(sag))
    else:
        hm_s, hm_e = model.forward(Tensor(vol))
    d_orig = v.dims[0]
    L = model.config.heatmap_len
    s_idx = decode(hm_s.data, "argmax")
    e_idx = decode(hm_e.data, "argmax")
    s_hm = v.spacing.sz * d_orig / L  # heatmap-grid spacing (mm per bin)

    def to_orig(i):
        return min(d_orig - 1, max(0, round(i * d_orig / L)))

    start, end = to_orig(s_idx), to_orig(e_idx)
    swapped = start > end
    if swapped:
        start, end = end, start
        s_idx, e_idx = e_idx, s_idx
    return LocPrediction(start=start, end=end, start_hm=int(s_idx), end_hm=int(e_idx),
                         s_hm=s_hm, s_ori=v.spacing.sz, swapped=swapped)


def save_checkpoint(path, ckpt: Checkpoint):
    meta = dict(ckpt.meta)
    hist = meta.pop("loss_history", None)
    if hist:
        meta["loss_history_tail"] = [float(x) for x in hist[-20:]]
    save_blob(path, ckpt.tensors, extra={"config": asdict(ckpt.config), "meta": meta})


def load_checkpoint(path) -> LocNet:
    tensors, manifest = load_blob(path)
    cfg_d = manifest["config"]
    for key in ("input_dims", "channels_3d", "view_channels", "window"):
        cfg_d[key] = tuple(cfg_d[key])
    cfg_d["stride_plan"] = tuple(tuple(s) for s in cfg_d["stride_plan"])
    config = LocNetConfig(**cfg_d)
    model = build(config)
    for name, p in model.params.items():
        if name not in tensors:
            raise ConfigError(f"checkpoint missing tensor {name}")
        if tensors[name].shape != p.data.shape:
            raise ConfigError(f"checkpoint tensor {name} shape {tensors[name].shape} "
                              f"vs expected {p.data.shape}")
        p.data = tensors[name]
    return model
