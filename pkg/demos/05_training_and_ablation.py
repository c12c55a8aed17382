"""Train the slice-range localizer on a toy corpus, then compare the
multi-view fusion against a volume-only ablation on a view-dependent
phantom family (where axial statistics alone carry no range signal).

This is a scaled-down run; expect a couple of minutes.
"""

import argparse
import tempfile

import numpy as np

from abdkit import locnet as ln
from abdkit.phantom import PhantomSpec, generate_corpus, load_manifest
from abdkit.heatmap import LocLabel
from abdkit.volume import load_volume


def load_cases(corpus_dir, cfg):
    man = load_manifest(f"{corpus_dir}/manifest.json")
    cases = []
    for c in man["cases"]:
        v = load_volume(f"{corpus_dir}/{c['volume']}")
        cases.append(ln.prepare_case(
            v, LocLabel(c["label"]["start"], c["label"]["end"]), cfg))
    return cases


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=180)
    args = ap.parse_args()

    base = PhantomSpec(dims=(64, 16, 16), spacing=(3.0, 8.0, 8.0),
                       abdomen_start=20, abdomen_end=45,
                       body_ry_mm=48.0, body_rx_mm=50.0,
                       muscle_thickness_mm=10.0, vfa_blob_count=0)

    with tempfile.TemporaryDirectory() as td:
        generate_corpus(6, td, base_spec=base, seed=11,
                        family="view_dependent", start_jitter=8, end_jitter=8,
                        radius_jitter_mm=0.0)
        finals = {}
        for mode in ("multi_view", "volume_only"):
            cfg = ln.LocNetConfig(input_dims=(64, 16, 16),
                                  channels_3d=(4, 8, 8, 16),
                                  view_channels=(4, 8, 8, 16), d_k=16,
                                  heatmap_len=64, view_mode=mode, seed=0)
            cases = load_cases(td, cfg)
            model = ln.build(cfg)
            ckpt = ln.train(model, cases, iterations=args.iterations, lr=1e-3)
            hist = ckpt.meta["loss_history"]
            finals[mode] = float(np.mean(hist[-12:]))
            print(f"{mode:12s}: first loss {hist[0]:.4f}, "
                  f"final (mean of last 12) {finals[mode]:.4f}")

        gap = finals["volume_only"] - finals["multi_view"]
        print(f"\nmulti-view advantage: {gap:+.4f} "
              f"({'fusion wins' if gap > 0 else 'no win this seed'})")


if __name__ == "__main__":
    main()
