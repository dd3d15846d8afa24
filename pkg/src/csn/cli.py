"""Command-line interface.

Commands: degrade, train, eval, infer, params, gradcheck. Report paths
(train, eval) write a matplotlib figure next to the text/CSV output.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import dataset, degrade, figures, metrics, training
from .autodiff import grad_check
from .checkpoint import load_checkpoint, save_checkpoint
from .config import parse_config
from .imageio import read_image, write_image
from .model import CsnModel, ModelConfig, build, depth, param_count

TD_NORMALIZATION_NOTE = "td intensity normalization: 1/r^2 on truncation, r^2 on zero-fill"


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("CSN_THREADS", "")
    return max(1, int(env)) if env.isdigit() else 1


def _load_configs(args):
    if args.config:
        model_cfg, train_cfg = parse_config(args.config)
    else:
        model_cfg, train_cfg = ModelConfig().validate(), training.TrainConfig().validate()
    if getattr(args, "scale", None):
        model_cfg.scale = args.scale
        model_cfg.validate()
    if getattr(args, "seed", None) is not None:
        train_cfg.seed = args.seed
    if getattr(args, "iterations", None):
        train_cfg.iterations = args.iterations
    return model_cfg, train_cfg


def cmd_degrade(args) -> int:
    r = args.scale
    names = sorted(n for n in os.listdir(args.in_dir)
                   if n.endswith((".pgm", ".f32")))
    if not names:
        raise ValueError(f"no .pgm/.f32 images found in {args.in_dir}")
    os.makedirs(args.out, exist_ok=True)

    def one(name):
        hr = read_image(os.path.join(args.in_dir, name))
        if args.model == "bd":
            lr = degrade.degrade_bd(hr, r)
        else:
            lr = degrade.degrade_td(hr, r)
        out_name = name  # same name, LR directory
        write_image(lr, os.path.join(args.out, out_name))
        return out_name

    entries, skipped = [], []
    with ThreadPoolExecutor(max_workers=_threads(args)) as pool:
        futures = [(name, pool.submit(one, name)) for name in names]
        for name, fut in futures:
            try:
                out_name = fut.result()
            except ValueError as exc:
                skipped.append((name, str(exc)))
                continue
            stem = os.path.splitext(name)[0]
            entries.append(dataset.ManifestEntry(
                entry_id=stem,
                hr_path=os.path.relpath(os.path.join(args.in_dir, name), args.out),
                lr_path=out_name,
                image_type=dataset.guess_image_type(name),
                degradation=args.model.upper(),
                scale=r,
            ))
    manifest_path = os.path.join(args.out, "manifest.csv")
    dataset.write_manifest(manifest_path, entries, comments=[TD_NORMALIZATION_NOTE])
    print(f"wrote {len(entries)} LR images and {manifest_path}")
    for name, why in skipped:
        print(f"skipped {name}: {why}", file=sys.stderr)
    return 0


def _checkpoint_compatible(model_cfg, loaded_cfg):
    if loaded_cfg.to_dict() != model_cfg.to_dict():
        raise ValueError(
            f"checkpoint config {loaded_cfg.to_dict()} does not match "
            f"requested config {model_cfg.to_dict()}")


def cmd_train(args) -> int:
    model_cfg, train_cfg = _load_configs(args)
    os.makedirs(args.out, exist_ok=True)
    pairs = dataset.load_pairs(args.manifest, split=None)
    train_pairs = [p for p in pairs if p.scale == model_cfg.scale]
    if len(train_pairs) != len(pairs):
        raise ValueError(f"manifest contains entries with scale != {model_cfg.scale}")
    entries = dataset.read_manifest(args.manifest)
    val_ids = {e.entry_id for e in entries if e.split == "val"}
    val_pairs = [p for p in train_pairs if p.image_id in val_ids]
    train_pairs = [p for p in train_pairs if p.image_id not in val_ids]

    state = None
    if args.checkpoint:
        loaded = load_checkpoint(args.checkpoint)
        _checkpoint_compatible(model_cfg, loaded.model.config)
        model = loaded.model
        state = loaded.trainer_state(train_cfg)
    else:
        model = build(model_cfg, seed=train_cfg.seed)

    def writer(mdl, st):
        path = os.path.join(args.out, f"checkpoint_{st.iteration:08d}.csn")
        save_checkpoint(path, mdl, st.iteration, st.adam, st.sampler_rng)

    result = training.train(model, train_pairs, train_cfg, val_pairs=val_pairs,
                            threads=_threads(args),
                            state=state,
                            checkpoint_writer=writer if train_cfg.checkpoint_every else None)
    final = result.state
    save_checkpoint(os.path.join(args.out, "checkpoint_final.csn"),
                    model, final.iteration, final.adam, final.sampler_rng)
    training.write_log(result.records, os.path.join(args.out, "train_log.txt"))
    figures.save_training_curves(result.records, os.path.join(args.out, "training_curves.png"))
    last = result.records[-1]
    print(f"trained to iteration {final.iteration}, final logged loss {last.loss:.6e}")
    print(f"outputs in {args.out}: checkpoint_final.csn, train_log.txt, training_curves.png")
    return 0


def evaluate_pairs(pairs, sr_fn, threads=1):
    """Score SR output against HR for each pair; sr_fn maps an LR slice to SR."""
    def one(pr):
        sr = sr_fn(pr)
        peak = float(pr.hr.max()) or 1.0
        hr_n = pr.hr / peak
        sr_n = sr / peak
        return metrics.ImageScore(pr.image_id,
                                  metrics.psnr(hr_n, sr_n, 1.0),
                                  metrics.ssim(hr_n, sr_n))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        scores = list(pool.map(one, pairs))
    return metrics.make_report(scores)


def cmd_eval(args) -> int:
    pairs = dataset.load_pairs(args.manifest)
    if not pairs:
        raise ValueError(f"{args.manifest}: no entries")
    if args.bicubic:
        def sr_fn(pr):
            h, w = pr.lr.shape
            from . import ops
            return ops.bicubic_resize(pr.lr[None, None].astype(np.float64),
                                      h * pr.scale, w * pr.scale)[0, 0]
    else:
        if not args.checkpoint:
            raise ValueError("eval needs --checkpoint (or --bicubic for the baseline)")
        loaded = load_checkpoint(args.checkpoint)
        model = loaded.model
        scales = {p.scale for p in pairs}
        if scales != {model.config.scale}:
            raise ValueError(f"manifest scales {sorted(scales)} do not match "
                             f"checkpoint scale {model.config.scale}")

        def sr_fn(pr):
            return model.forward(pr.lr[None, None])[0, 0]

    report = evaluate_pairs(pairs, sr_fn, threads=_threads(args))
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "metrics.csv")
    fig_path = os.path.join(args.out, "metrics.png")
    metrics.write_csv(report, csv_path)
    figures.save_metric_chart(report, fig_path)
    print(f"mean PSNR {report.mean_psnr_db:.4f} dB, mean SSIM {report.mean_ssim:.4f} "
          f"over {len(report.per_image)} images")
    print(f"wrote {csv_path} and {fig_path}")
    return 0


def cmd_infer(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    model = loaded.model
    lr = read_image(args.input)
    sr = model.forward(lr[None, None].astype(np.float32))[0, 0]
    write_image(sr, args.out)
    print(f"wrote {args.out} ({sr.shape[0]}x{sr.shape[1]})")
    return 0


def cmd_params(args) -> int:
    model_cfg, _ = _load_configs(args)
    print(f"{param_count(model_cfg)}, depth {depth(model_cfg)}")
    return 0


def cmd_gradcheck(args) -> int:
    # a desk-size network; the config file only supplies variant / esc knobs
    model_cfg, _ = _load_configs(args)
    tiny = ModelConfig(n=1, m=1, variant=model_cfg.variant, channels=16, growth=4,
                       scale=2, in_channels=1, esc_mode=model_cfg.esc_mode,
                       residual_scale=model_cfg.residual_scale).validate()
    model = build(tiny, seed=7, dtype=np.float64)
    rng = np.random.default_rng(11)
    x = rng.random((1, 1, 8, 8))
    target = rng.random((1, 1, 16, 16))

    def f(store):
        from .autodiff import Tape, l1_loss
        from .model import model_forward
        tape = Tape()
        leafs = {name: tape.leaf(p.value, param=p) for name, p in store.items()}
        return l1_loss(model_forward(tape, leafs, tiny, x), target)

    result = grad_check(f, model.params, eps=1e-4)
    print(result)
    return 0 if result.max_rel_error < 1e-5 else 1


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="csn",
        description="Channel-splitting super-resolution: dataset generation, "
                    "training, evaluation and inspection.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p, *flags):
        if "config" in flags:
            p.add_argument("--config", help="key = value config file")
        if "threads" in flags:
            p.add_argument("--threads", type=int,
                           help="worker threads (fallback: CSN_THREADS env var)")

    p = sub.add_parser("degrade", help="generate LR images and a manifest from HR slices")
    p.add_argument("in_dir", help="directory of HR .pgm/.f32 slices")
    p.add_argument("--out", required=True, help="output directory for LR images + manifest")
    p.add_argument("--model", choices=["bd", "td"], required=True,
                   help="bd = bicubic downsampling, td = k-space truncation")
    p.add_argument("--scale", type=int, choices=[1, 2, 3, 4], required=True)
    add_common(p, "threads")
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("train", help="train a model on a manifest")
    add_common(p, "config", "threads")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--scale", type=int, choices=[2, 3, 4], help="override config scale")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--iterations", type=int, help="override config iterations")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint (or the bicubic baseline) on a manifest")
    add_common(p, "threads")
    p.add_argument("--checkpoint")
    p.add_argument("--bicubic", action="store_true",
                   help="evaluate the plain bicubic upsampling baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="super-resolve one LR image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("input", help="LR image (.pgm or .f32)")
    p.add_argument("--out", required=True, help="output image path (.pgm or .f32)")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("params", help="print exact parameter count and depth")
    add_common(p, "config")
    p.add_argument("--scale", type=int, choices=[2, 3, 4], help="override config scale")
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("gradcheck", help="finite-difference check on a tiny network")
    add_common(p, "config")
    p.set_defaults(fn=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
