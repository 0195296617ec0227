"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
``--threads N`` (or SIAM_THREADS) caps the BLAS worker pools; it must take
effect before numpy loads, which is why the heavy imports live inside the
command handlers.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import DataError, NumericError, SiamError, TapeError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems must exit 1, not argparse's 2
        raise UsageError(message)


def _set_threads(n: int) -> None:
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_settings(args):
    from .presets import get_preset
    from .runconfig import load_runconfig
    if getattr(args, "preset", None):
        return get_preset(args.preset)
    if getattr(args, "config", None):
        return load_runconfig(args.config)
    raise UsageError("provide --config FILE or --preset NAME")


def _add_config_source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--config", help="run configuration file")
    g.add_argument("--preset", help="named built-in preset")


def cmd_gen_data(args) -> int:
    from .data import (MovingConfig, builtin_digits, digits_from_idx,
                       generate_moving, write_svt)
    conf = MovingConfig(
        canvas=(args.canvas, args.canvas) if isinstance(args.canvas, int)
        else args.canvas,
        n_digits=args.digits, t_total=args.frames,
        speed_min=args.speed_min, speed_max=args.speed_max, seed=args.seed)
    if args.mnist_images:
        labels = Path(args.mnist_labels).read_bytes() \
            if args.mnist_labels else None
        digits = digits_from_idx(Path(args.mnist_images).read_bytes(), labels)
    else:
        digits = builtin_digits()
    batch = generate_moving(conf, digits, args.n)
    write_svt(args.out, batch)
    print(f"wrote {args.out}: {args.n} sequences of {args.frames} frames "
          f"({conf.canvas[0]}x{conf.canvas[1]}), seed {args.seed}")
    return 0


def cmd_train(args) -> int:
    from .data import read_svt
    from .model import build_model
    from .train import load_checkpoint, train_run
    settings = _load_settings(args)
    data = read_svt(args.data)
    model = build_model(settings.model, seed=settings.train.seed)
    resume = load_checkpoint(args.resume) if args.resume else None
    result = train_run(model, data, settings.train, out_dir=Path(args.out),
                       resume=resume,
                       on_step=_progress if args.verbose else None)
    last = result.records[-1] if result.records else None
    if last is not None:
        print(f"finished at step {last.step + 1}, loss {last.loss:.6g}")
    if result.final_checkpoint:
        print(f"final checkpoint: {result.final_checkpoint}")
    return 0


def _progress(rec) -> None:
    print(f"step {rec.step:6d}  lr {rec.lr:.3e}  loss {rec.loss:.6f}  "
          f"{rec.wall_ms:.0f} ms", flush=True)


def _restore(checkpoint_path):
    from .model import build_model
    from .runconfig import parse_model_text
    from .train import apply_checkpoint, load_checkpoint
    ckpt = load_checkpoint(checkpoint_path)
    cfg = parse_model_text(ckpt.config_text)
    model = build_model(cfg, seed=0)
    apply_checkpoint(model, ckpt)
    return model, ckpt


def _predictions(model, data, limit=None):
    import numpy as np
    from .data import split_io
    from .tensor import Tensor
    cfg = model.config
    xin, target = split_io(data, cfg.t_in, cfg.t_out)
    n = xin.shape[0] if limit is None else min(limit, xin.shape[0])
    preds = []
    for lo in range(0, n, 8):
        hi = min(lo + 8, n)
        x = Tensor(np.asarray(xin.data[lo:hi], dtype=cfg.dtype))
        preds.append(model(x).data)
    return (np.concatenate(preds, axis=0),
            np.asarray(target.data[:n]), np.asarray(xin.data[:n]))


def cmd_eval(args) -> int:
    from .data import read_svt
    from .metrics import evaluate
    model, ckpt = _restore(args.checkpoint)
    data = read_svt(args.data)
    pred, target, _ = _predictions(model, data, args.limit)
    report = evaluate(pred, target, config_fingerprint=ckpt.fingerprint)
    print(report.to_text())
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
        print(f"wrote {args.report}")
    return 0


def cmd_predict(args) -> int:
    import numpy as np
    from .data import read_svt
    from .images import tile_rows, write_frame
    model, _ = _restore(args.checkpoint)
    cfg = model.config
    data = read_svt(args.data)
    pred, target, _ = _predictions(model, data, args.clips)
    pred = np.clip(pred, 0.0, 1.0)
    out_root = Path(args.out)
    for i in range(pred.shape[0]):
        seq_dir = out_root / f"seq{i:03d}"
        seq_dir.mkdir(parents=True, exist_ok=True)
        for k in range(cfg.t_out):
            write_frame(seq_dir / f"t{cfg.t_in + 1 + k}", pred[i, k])
        grid = tile_rows([[target[i, k] for k in range(cfg.t_out)],
                          [pred[i, k] for k in range(cfg.t_out)]])
        write_frame(seq_dir / "grid", grid)
    print(f"wrote predictions for {pred.shape[0]} sequences to {out_root}")
    return 0


def cmd_count(args) -> int:
    from .analysis import compare_to_reference, count_flops
    from .model import build_model
    settings = _load_settings(args)
    cfg = settings.model
    model = build_model(cfg, seed=settings.train.seed)
    shape = (args.batch, cfg.t_in) + cfg.frame_shape
    report = count_flops(model, shape, flops_per_mac=args.flops_per_mac)
    print(report.to_text())
    if getattr(args, "preset", None):
        print(compare_to_reference(report, args.preset))
    return 0


def cmd_gradcheck(args) -> int:
    from dataclasses import replace
    from .gradcheck import finite_diff_check
    from .model import build_model
    settings = _load_settings(args)
    cfg = replace(settings.model, dtype="float64")
    model = build_model(cfg, seed=settings.train.seed)
    rows = finite_diff_check(model, tolerance=args.tolerance,
                             samples_per_param=args.samples, seed=args.seed)
    failures = 0
    for r in rows:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.max_rel_err:.3e}  {r.name}")
        failures += 0 if r.ok else 1
    print(f"{len(rows) - failures}/{len(rows)} parameter groups pass "
          f"(tolerance {args.tolerance:g})")
    if failures:
        raise NumericError(f"{failures} parameter groups failed gradcheck")
    return 0


def cmd_config(args) -> int:
    from .presets import get_preset, preset_names
    from .runconfig import print_runconfig
    if args.list:
        print("\n".join(preset_names()))
        return 0
    if not args.preset:
        raise UsageError("provide --preset NAME (or --list)")
    text = print_runconfig(get_preset(args.preset))
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="siam",
                description="video prediction with alternating mixers")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS threads (also: SIAM_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate moving-digit clips (SVT)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, required=True, help="number of sequences")
    g.add_argument("--frames", type=int, default=20, help="frames/sequence")
    g.add_argument("--canvas", type=int, default=64)
    g.add_argument("--digits", type=int, default=2)
    g.add_argument("--speed-min", type=float, default=2.0)
    g.add_argument("--speed-max", type=float, default=5.0)
    g.add_argument("--mnist-images", help="IDX image file for real glyphs")
    g.add_argument("--mnist-labels", help="IDX label file")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    _add_config_source(t)
    t.add_argument("--data", required=True, help="SVT clip file")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", help="write JSON report here")
    e.add_argument("--limit", type=int, default=None)
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="write predicted frame images")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--clips", type=int, default=1)
    pr.set_defaults(func=cmd_predict)

    c = sub.add_parser("count", help="parameter/FLOP accounting")
    _add_config_source(c)
    c.add_argument("--batch", type=int, default=1)
    c.add_argument("--flops-per-mac", type=int, choices=(1, 2), default=1)
    c.set_defaults(func=cmd_count)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_config_source(gc)
    gc.add_argument("--samples", type=int, default=3,
                    help="probed entries per parameter")
    gc.add_argument("--tolerance", type=float, default=1e-5)
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)

    cf = sub.add_parser("config", help="print or write a preset config")
    cf.add_argument("--preset")
    cf.add_argument("--out")
    cf.add_argument("--list", action="store_true")
    cf.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        threads = args.threads
        if threads is None and os.environ.get("SIAM_THREADS"):
            threads = int(os.environ["SIAM_THREADS"])
        if threads is not None:
            if threads < 1:
                raise UsageError("--threads must be >= 1")
            _set_threads(threads)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (NumericError, TapeError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except SiamError as e:  # anything else from this package
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
