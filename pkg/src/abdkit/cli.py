"""Command-line interface.

Subcommands cover each pipeline stage: phantom generation, slice-range
localization, rule-based segmentation (or external mask ingestion),
evaluation tables, tissue quantification, toy training, and the HTTP
service. Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import locnet as ln
from .blob import BlobFormatError
from .heatmap import LocLabel
from .metrics import (LocEvalInput, export_report, loc_eval_row, quantify,
                      report_json, score_masks)
from .phantom import PhantomSpec, generate_corpus, load_manifest
from .segment import ingest_mask, segment_volume
from .volume import VolumeFormatError, load_volume, save_rawv

IO_ERRORS = (OSError, VolumeFormatError, BlobFormatError,
             json.JSONDecodeError)


def _cmd_phantom(args) -> int:
    D, H, W = args.dims
    sz, sy, sx = args.spacing
    start, end = args.abdomen or (round(0.3 * D), round(0.7 * D))
    # keep the body (plus corpus radius jitter) inside the pixel grid
    ry = min(52.0, 0.85 * (H / 2 - 1) * sy)
    rx = min(54.0, 0.85 * (W / 2 - 1) * sx)
    base = PhantomSpec(dims=tuple(args.dims), spacing=tuple(args.spacing),
                       abdomen_start=start, abdomen_end=end,
                       body_ry_mm=ry, body_rx_mm=rx)
    jitter = max(1, D // 10)
    generate_corpus(args.count, args.out, base_spec=base, seed=args.seed,
                    family=args.family, start_jitter=jitter, end_jitter=jitter)
    print(f"wrote {args.count} phantoms to {args.out}")
    return 0


def _cmd_locate(args) -> int:
    model = ln.load_checkpoint(args.ckpt)
    v = load_volume(args.volume)
    pred = ln.predict(model, v)
    result = {"start": pred.start, "end": pred.end,
              "start_mm": pred.start * pred.s_ori,
              "end_mm": pred.end * pred.s_ori}
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        print(f"start slice {pred.start} ({result['start_mm']:.1f} mm), "
              f"end slice {pred.end} ({result['end_mm']:.1f} mm)")
    return 0


def _cmd_segment(args) -> int:
    v = load_volume(args.volume)
    if args.masks:
        masks = ingest_mask(args.masks, v.dims)
    else:
        end = v.dims[0] - 1 if args.end is None else args.end
        labels = segment_volume(v, start=args.start, end=end)
        masks = np.stack(labels).astype(np.uint8)
    save_rawv(args.out, masks, v.spacing, dtype="uint8")
    print(f"wrote masks {masks.shape} to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    if args.target == "loc":
        with open(args.cases, encoding="utf-8") as f:
            data = json.load(f)
        for endpoint in ("start", "end"):
            cases = [LocEvalInput(**c) for c in data[endpoint]]
            row = loc_eval_row(cases)
            print(f"{endpoint:5s}  avg {row.avg_mm:7.2f} mm  max {row.max_mm:7.2f} mm"
                  f"  <=5mm {row.pct_le_5mm:5.1f}%  <=10mm {row.pct_le_10mm:5.1f}%")
        return 0
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    names = sorted(p.name for p in pred_dir.iterdir() if p.suffix == ".rawv")
    if not names:
        print("no .rawv masks in prediction directory", file=sys.stderr)
        return 1
    sy, sx = args.spacing[1], args.spacing[2]
    for name in names:
        from .volume import load_array
        pred, _ = load_array(pred_dir / name)
        gt, _ = load_array(gt_dir / name)
        s = score_masks(pred, gt, spacing=(sy, sx))
        cells = "  ".join(f"{k} {e['dsc']:.4f}" for k, e in s.per_class.items())
        print(f"{name}: {cells}  macro_dsc {s.macro_dsc:.4f}")
    return 0


def _cmd_quantify(args) -> int:
    v = load_volume(args.volume)
    from .volume import load_array
    depth = np.asarray(load_array(args.masks)[0]).shape[0]
    masks = ingest_mask(args.masks, (depth,) + v.dims[1:])
    rep = quantify(list(masks), v, start_index=args.start)
    if args.out:
        export_report(rep, args.format, args.out)
        print(f"wrote {args.format} report to {args.out}")
    else:
        print(report_json(rep))
    return 0


def _cmd_train_toy(args) -> int:
    man = load_manifest(args.manifest)
    mdir = Path(args.manifest).parent
    first = load_volume(mdir / man["cases"][0]["volume"])
    cfg = ln.LocNetConfig(input_dims=first.dims,
                          channels_3d=tuple(args.channels),
                          view_channels=tuple(args.channels),
                          d_k=args.d_k, heatmap_len=args.heatmap_len,
                          view_mode=args.view_mode, seed=args.seed)
    cases = []
    for c in man["cases"]:
        v = load_volume(mdir / c["volume"])
        label = LocLabel(c["label"]["start"], c["label"]["end"])
        cases.append(ln.prepare_case(v, label, cfg))
    model = ln.build(cfg)
    ckpt = ln.train(model, cases, iterations=args.iterations, lr=args.lr)
    ln.save_checkpoint(args.out, ckpt)
    hist = ckpt.meta["loss_history"]
    print(f"trained {args.iterations} iterations, final loss {hist[-1]:.4f}, "
          f"checkpoint -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve
    serve(args.data, host=args.host, port=args.port)
    return 0


def _dims(text):
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected D,H,W")
    return parts


def _spacing3(text):
    parts = tuple(float(p) for p in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected sz,sy,sx")
    return parts


def _channels(text):
    return tuple(int(p) for p in text.split(","))


def _int_pair(text):
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected START,END")
    return parts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abdkit",
                                description="abdominal CT body-composition toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    ph = sub.add_parser("phantom", help="synthetic phantom utilities")
    phs = ph.add_subparsers(dest="phantom_command", required=True)
    gen = phs.add_parser("gen", help="generate a phantom corpus")
    gen.add_argument("--out", required=True)
    gen.add_argument("--count", type=int, default=8)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--dims", type=_dims, default=(128, 32, 32))
    gen.add_argument("--spacing", type=_spacing3, default=(3.0, 4.0, 4.0))
    gen.add_argument("--abdomen", type=_int_pair, default=None,
                     metavar="START,END")
    gen.add_argument("--family", choices=("standard", "view_dependent"),
                     default="standard")
    gen.set_defaults(func=_cmd_phantom)

    loc = sub.add_parser("locate", help="run slice-range localization")
    loc.add_argument("--volume", required=True)
    loc.add_argument("--ckpt", required=True)
    loc.add_argument("--json", action="store_true")
    loc.set_defaults(func=_cmd_locate)

    seg = sub.add_parser("segment", help="segment a volume (or ingest masks)")
    seg.add_argument("--volume", required=True)
    seg.add_argument("--out", required=True)
    seg.add_argument("--start", type=int, default=0)
    seg.add_argument("--end", type=int, default=None)
    seg.add_argument("--masks", default=None,
                     help="ingest an externally produced mask file instead")
    seg.set_defaults(func=_cmd_segment)

    ev = sub.add_parser("evaluate", help="evaluation tables")
    ev.add_argument("target", choices=("loc", "seg"))
    ev.add_argument("--cases", help="loc: JSON with start/end case lists")
    ev.add_argument("--pred", help="seg: directory of predicted masks")
    ev.add_argument("--gt", help="seg: directory of ground-truth masks")
    ev.add_argument("--spacing", type=_spacing3, default=(1.0, 1.0, 1.0))
    ev.set_defaults(func=_cmd_evaluate)

    q = sub.add_parser("quantify", help="tissue quantification report")
    q.add_argument("--volume", required=True)
    q.add_argument("--masks", required=True)
    q.add_argument("--start", type=int, default=0)
    q.add_argument("--format", choices=("json", "csv"), default="json")
    q.add_argument("--out", default=None)
    q.set_defaults(func=_cmd_quantify)

    tt = sub.add_parser("train-toy", help="train the localizer on a corpus")
    tt.add_argument("--manifest", required=True)
    tt.add_argument("--out", required=True)
    tt.add_argument("--iterations", type=int, default=800)
    tt.add_argument("--lr", type=float, default=1e-3)
    tt.add_argument("--heatmap-len", type=int, default=128)
    tt.add_argument("--channels", type=_channels, default=(8, 16, 32, 64))
    tt.add_argument("--d-k", type=int, default=32)
    tt.add_argument("--view-mode", choices=("multi_view", "volume_only"),
                    default="multi_view")
    tt.add_argument("--seed", type=int, default=0)
    tt.set_defaults(func=_cmd_train_toy)

    sv = sub.add_parser("serve", help="start the refinement HTTP service")
    sv.add_argument("--data", default=os.environ.get("ABDKIT_DATA_DIR"))
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8642)
    sv.set_defaults(func=_cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except IO_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
