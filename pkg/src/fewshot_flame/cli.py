"""Command-line interface: ``prepare | train | eval | bench | embed``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, parse_pairs
from .dataset import (MANIFEST_NAME, SplitSpec, export_dataset, generate_synthetic_dataset,
                      load_dataset, load_prepared)
from .errors import ConfigurationError
from .evaluation import export_embeddings
from .pipeline import (CHECKPOINT_NAME, CONFIG_NAME, REPORT_NAME, SPEED_NAME, benchmark_run,
                       checkpoint_transform, evaluate_run, load_encoder, resolve_dataset,
                       train_run)
from .training import Checkpoint

log = logging.getLogger("fewshot_flame")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _split_spec(text: str) -> SplitSpec:
    try:
        parts = [int(p) for p in text.split(",")]
        return SplitSpec(*parts)
    except (ValueError, TypeError):
        raise UsageError(f"--split expects 'train,validation,test', got {text!r}") from None


# ------------------------------------------------------------------ commands

def cmd_prepare(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.overwrite:
        raise FileExistsError(f"{out} already exists; pass --overwrite to replace it")
    split = _split_spec(args.split)
    if args.source:
        ds = load_dataset(args.source, split, args.seed)
        origin = {"source": str(args.source)}
    else:
        ds = generate_synthetic_dataset(args.classes, split, args.synthetic, args.seed)
        origin = {"synthetic": args.synthetic, "n_classes": args.classes}
    if out.exists() and args.overwrite:
        import shutil
        shutil.rmtree(out)
    export_dataset(ds, out)
    # re-write the manifest with provenance for replay
    manifest_path = out / MANIFEST_NAME
    manifest = json.loads(manifest_path.read_text())
    manifest.update({"seed": args.seed, "split_spec": list(split), **origin})
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    log.info("wrote %d images in %d classes to %s", len(ds), ds.n_classes, out)
    return 0


def _run_config(args) -> RunConfig:
    overrides = parse_pairs(args.set or [])
    for key in ("algorithm", "epochs", "dataset", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    if args.plot:
        overrides["plot"] = "true"
    if args.config:
        return RunConfig.load(args.config, **overrides)
    return RunConfig.from_mapping(overrides)


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = Path(cfg.output_dir)
    if (out / CHECKPOINT_NAME).exists() and not args.overwrite:
        raise FileExistsError(f"{out} already holds a checkpoint; pass --overwrite")

    def report(r):
        log.info("epoch %d train_acc %.4f val_acc %.4f loss %.5f%s", r.epoch, r.train_acc,
                 r.val_acc, r.loss, " *" if r.improved else "")

    train_run(cfg, out_dir=out, callback=report)
    log.info("run written to %s", out)
    return 0


def _load_for_eval(args) -> tuple[Checkpoint, object, RunConfig | None, Path]:
    run = Path(args.run) if args.run else None
    cfg = RunConfig.load(run / CONFIG_NAME) if run and (run / CONFIG_NAME).is_file() else None
    ckpt_path = Path(args.checkpoint) if args.checkpoint else (run / CHECKPOINT_NAME if run else None)
    if ckpt_path is None:
        raise UsageError("give --run or --checkpoint")
    ckpt = Checkpoint.load(ckpt_path)
    if args.dataset:
        root = Path(args.dataset)
        ds = load_prepared(root) if (root / MANIFEST_NAME).is_file() else load_dataset(root)
    elif cfg is not None:
        ds = resolve_dataset(cfg)
    else:
        raise UsageError("give --dataset when the run directory has no config")
    out_dir = run or ckpt_path.parent
    if cfg is not None and ckpt.algorithm != cfg.algorithm:
        raise ConfigurationError(f"checkpoint is {ckpt.algorithm}, config says {cfg.algorithm}")
    return ckpt, ds, cfg, out_dir


def cmd_eval(args) -> int:
    ckpt, ds, cfg, out_dir = _load_for_eval(args)
    k = cfg.k if cfg else 5
    out = Path(args.out) if args.out else out_dir / REPORT_NAME
    _, report = evaluate_run(ckpt, ds, k, out)
    m = report.macro
    log.info("macro accuracy %.4f precision %.4f recall %.4f f1 %.4f -> %s",
             m.accuracy, m.precision, m.recall, m.f1, out)
    return 0


def cmd_bench(args) -> int:
    ckpt, ds, cfg, out_dir = _load_for_eval(args)
    k = cfg.k if cfg else 5
    out = Path(args.out) if args.out else out_dir / SPEED_NAME
    rep = benchmark_run(ckpt, ds, args.frames, args.seed, k, out)
    log.info("%d frames: %.1f ms total, %.2f ms/frame, %.2f fps -> %s", rep.n_frames,
             rep.total_ms, rep.per_frame_ms, rep.fps, out)
    return 0


def cmd_embed(args) -> int:
    ckpt, ds, _, out_dir = _load_for_eval(args)
    out = Path(args.out) if args.out else out_dir / "embeddings.csv"
    export_embeddings(load_encoder(ckpt), ds, out, checkpoint_transform(ckpt))
    log.info("wrote %d embeddings to %s", len(ds), out)
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fewshot-flame", description=__doc__.splitlines()[0])
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("prepare", help="materialise a dataset in class-directory layout")
    src = pr.add_mutually_exclusive_group()
    src.add_argument("--synthetic", choices=("easy", "hard"), default="easy")
    src.add_argument("--source", help="existing <root>/<class>/*.png tree to re-split")
    pr.add_argument("--classes", type=int, default=6)
    pr.add_argument("--split", default="20,20,400", help="per-class train,validation,test")
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", required=True)
    pr.add_argument("--overwrite", action="store_true")
    pr.set_defaults(func=cmd_prepare)

    tr = sub.add_parser("train", help="train sn-knn or pn and write a run directory")
    tr.add_argument("--config", help="key = value config file")
    tr.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    tr.add_argument("--algorithm", choices=("pn", "sn-knn"))
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--dataset")
    tr.add_argument("--out", dest="output_dir")
    tr.add_argument("--plot", action="store_true")
    tr.add_argument("--overwrite", action="store_true")
    tr.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "confusion matrix and metrics on the test split"),
                                 ("bench", cmd_bench, "frame-by-frame inference timing"),
                                 ("embed", cmd_embed, "export embeddings as CSV")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--run", help="run directory written by 'train'")
        sp.add_argument("--checkpoint")
        sp.add_argument("--dataset")
        sp.add_argument("--out")
        if name == "bench":
            sp.add_argument("--frames", type=int, default=120)
            sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
