"""vigil command line.

Usage:
  python -m vigil gradcheck [--full-model] [--seed S]
  python -m vigil params --config config/models/sepconvlstm_m.json [--flops --convention mac2]
  python -m vigil params --compare
  python -m vigil params --cost 224,224,56,64,3
  python -m vigil synth --out data/synth --n 32 --seed 0
  python -m vigil preprocess --in data/synth/violent/synth-0-0000 --out clip.clp1 --mode bsf
  python -m vigil train --data data/synth --config config/models/tiny_m.json --epochs 30 --seed 0 --out-weights tiny.sclw
  python -m vigil eval --data data/synth --weights tiny.sclw --config config/models/tiny_m.json
  python -m vigil predict --clip data/synth/violent/synth-0-0000 --weights tiny.sclw --config config/models/tiny_m.json

Exit status is 0 on success, 2 on usage errors and 1 otherwise; failures
print one line `error: <category>: <message>` to stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .autodiff import run_all
from .config import Config, load_config
from .errors import ConfigError, GradcheckFailure, VigilError
from .nn import VARIANTS, Model, ModelConfig, WeightStore, variant_config
from .preproc import background_suppress, frame_difference, model_frames
from .tooling import (
    CLP1_VERSION,
    RANGE_SIGNED,
    RANGE_UNIT,
    SCLW_VERSION,
    compare_conv_cost,
    compare_variants,
    count_flops,
    count_params,
    format_variants,
    load_clip,
    load_dataset,
    read_sclw,
    write_clp1,
    write_dataset,
    write_sclw,
)
from .train import TrainConfig, evaluate, fit, make_synth, train_val_split


def setup_logging(level: str, log_dir: str) -> None:
    Path(log_dir).mkdir(parents=True, exist_ok=True)
    log_file = Path(log_dir) / "vigil.log"
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(log_file),
        ],
    )


logger = logging.getLogger(__name__)


class UsageError(VigilError):
    category = "usage"


# ── Config resolution ────────────────────────────────────────────────────────

def _train_config(ref: str) -> TrainConfig:
    """A JSON path, or the name of a reference variant."""
    if Path(ref).exists():
        return TrainConfig.load(ref)
    if ref in VARIANTS:
        model = variant_config(ref)
        return TrainConfig.for_model(model)
    raise ConfigError(f"{ref}: no such config file or variant (variants: {', '.join(VARIANTS)})")


def _load_model(weights: str, cfg: ModelConfig) -> Model:
    store = WeightStore(read_sclw(weights), provenance="loaded")
    logger.info("Loaded %d tensors from %s", len(store), weights)
    return Model(cfg, store)


# ── Subcommands ──────────────────────────────────────────────────────────────

def cmd_gradcheck(args: argparse.Namespace, settings: Config) -> int:
    reports = run_all(full_model=args.full_model, seed=args.seed, tolerance=args.tolerance)
    for report in reports:
        for line in report.lines():
            print(line)
    failed = [r.case for r in reports if not r.passed]
    if failed:
        raise GradcheckFailure(f"{len(failed)} case(s) over {args.tolerance:g}: {', '.join(failed)}")
    print(f"all {len(reports)} cases pass at {args.tolerance:g}")
    return 0


def cmd_params(args: argparse.Namespace, settings: Config) -> int:
    if args.cost:
        try:
            h, w, c, n, k = (int(v) for v in args.cost.split(","))
        except ValueError:
            raise UsageError(f"--cost wants H,W,C,N,K integers, got {args.cost!r}")
        cmp = compare_conv_cost(h, w, c, n, k, args.convention)
        print(f"standard  {cmp.standard:>16,}")
        print(f"separable {cmp.separable:>16,}")
        print(f"ratio     {cmp.ratio:.4f}  (1/N + 1/K² = {1 / n + 1 / (k * k):.4f})")
        return 0
    if args.compare:
        configs = {name: variant_config(name) for name in VARIANTS}
        print(format_variants(compare_variants(configs, args.convention), args.convention))
        return 0
    if not args.config:
        raise UsageError("params needs --config, --compare or --cost")
    cfg = _train_config(args.config).model
    report = count_flops(cfg, args.convention) if args.flops else count_params(cfg)
    print(report.format(flops=args.flops))
    return 0


def cmd_synth(args: argparse.Namespace, settings: Config) -> int:
    data = make_synth(args.n, seed=args.seed, frames=args.frames, size=args.size)
    write_dataset(data, args.out)
    counts = data.counts()
    print(f"wrote {len(data)} clips to {args.out} ({', '.join(f'{k}={v}' for k, v in counts.items())})")
    return 0


def cmd_preprocess(args: argparse.Namespace, settings: Config) -> int:
    clip = load_clip(args.input)
    frames = clip.frames
    if args.config:
        frames = model_frames(clip, _train_config(args.config).preproc)
    if args.mode == "bsf":
        write_clp1(args.out, background_suppress(frames), RANGE_UNIT)
    else:
        write_clp1(args.out, frame_difference(frames), RANGE_SIGNED)
    print(f"wrote {args.mode} stream of {clip.source_id} to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace, settings: Config) -> int:
    cfg = _train_config(args.config)
    updates = {
        "seed": args.seed,
        "augment": cfg.augment.model_copy(update={"seed": args.seed}),
        "workers": settings.workers,
        "deterministic": args.deterministic or settings.deterministic,
    }
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    cfg = cfg.model_copy(update=updates)

    data = load_dataset(args.data)
    if args.val:
        train, val = data, load_dataset(args.val)
    elif cfg.val_fraction > 0:
        train, val = train_val_split(data, cfg.val_fraction, cfg.seed)
    else:
        train, val = data, None

    run_dir = Path(settings.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    log_path = args.log or run_dir / f"train_seed{cfg.seed}.jsonl"
    model = Model.build(cfg.model, seed=cfg.seed)
    log = fit(model, train, cfg, val=val, log_path=log_path)

    write_sclw(args.out_weights, model.store)
    final = log.final
    if final is not None:
        val_txt = f" val_acc={final.val_acc:.3f}" if final.val_acc is not None else ""
        print(f"epochs={len(log.records)} loss={final.loss:.4f} train_acc={final.train_acc:.3f}{val_txt}")
    print(f"weights written to {args.out_weights}; log {log_path}")
    return 0


def cmd_eval(args: argparse.Namespace, settings: Config) -> int:
    cfg = _train_config(args.config)
    model = _load_model(args.weights, cfg.model)
    data = load_dataset(args.data)
    acc = evaluate(model, data, cfg.preproc, cfg.batch_size, settings.workers)
    print(f"accuracy={acc:.4f} clips={len(data)}")
    return 0


def cmd_predict(args: argparse.Namespace, settings: Config) -> int:
    cfg = _train_config(args.config)
    model = _load_model(args.weights, cfg.model)
    result = model.predict(load_clip(args.clip), cfg.preproc)
    print(f"{result.label} p={result.p:.4f}")
    return 0


# ── Parser ───────────────────────────────────────────────────────────────────

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vigil", description="Two-stream SepConvLSTM violence detection")
    parser.add_argument(
        "--version", action="version",
        version=f"vigil {__version__} (SCLW v{SCLW_VERSION}, CLP1 v{CLP1_VERSION})",
    )
    parser.add_argument("--settings", help="runtime settings YAML (default: config/vigil.yaml if present)")
    parser.add_argument("--log-level", help="overrides logging.level from the settings file")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--full-model", action="store_true", help="also check a tiny two-stream model end to end")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="parameter / FLOP tables")
    p.add_argument("--config", help="model or training JSON, or a variant name")
    p.add_argument("--flops", action="store_true")
    p.add_argument("--convention", choices=["mac2", "mac1"], default="mac2")
    p.add_argument("--compare", action="store_true", help="table of every reference variant")
    p.add_argument("--cost", metavar="H,W,C,N,K", help="separable vs standard convolution cost")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("synth", help="write a synthetic two-class dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="write one stream of a clip as CLP1")
    p.add_argument("--in", dest="input", required=True, help="frame directory or .clp1 file")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["bsf", "diff"], required=True)
    p.add_argument("--config", help="apply the eval-mode sampling and crop of this config first")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="fit a model and write SCLW weights")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-weights", required=True)
    p.add_argument("--val", help="validation root (default: seeded split of --data)")
    p.add_argument("--log", help="epoch log .jsonl (default: <run_dir>/train_seed<S>.jsonl)")
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of saved weights on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label one clip")
    p.add_argument("--clip", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def _fail(category: str, message: str) -> None:
    first = str(message).strip().splitlines()[0] if str(message).strip() else category
    print(f"error: {category}: {first}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        _fail(e.category, str(e))
        return 2
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)

    try:
        settings = load_config(args.settings)
    except FileNotFoundError as e:
        _fail("config", str(e))
        return 1
    except ConfigError as e:
        _fail(e.category, str(e))
        return 1
    setup_logging((args.log_level or settings.log_level).upper(), settings.log_dir)

    try:
        return args.func(args, settings)
    except UsageError as e:
        _fail(e.category, str(e))
        return 2
    except VigilError as e:
        logger.debug("%s failed", args.command, exc_info=True)
        _fail(e.category, str(e))
        return 1
    except ValidationError as e:
        _fail("config", f"{e.error_count()} invalid field(s): {e.errors()[0]['msg']}")
        return 1
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        _fail("io", str(e))
        return 1
    except Exception as e:
        logger.error("Unexpected error in %s: %s", args.command, e, exc_info=True)
        _fail("internal", str(e))
        return 1
