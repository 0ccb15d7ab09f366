"""Command line surface: train, translate, eval, ablate, gradcheck.

Every command is deterministic given its config file and seed. Exit
codes: 0 success, 1 usage or config error, 2 numeric abort, 3 I/O or
corruption error. The CYCLEGAN_LOG environment variable sets log
verbosity (DEBUG, INFO, WARNING, ERROR; default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
from PIL import Image

from . import gradcheck as gradcheck_suite
from .checkpoint import CheckpointError, load_state, save_checkpoint
from .config import ConfigError, RunConfig, describe_keys, parse_run_config
from .data import bytes_to_unit, load_domain, make_synthetic_pair, unit_to_bytes
from .evaluate import ablation_csv, evaluate, export_triptychs, report_csv, report_text, run_ablation
from .networks import forward
from .tensor import Tensor, no_grad
from .trainer import LossRecord, NumericalDivergence, init_state, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3

LOG_ENV = "CYCLEGAN_LOG"
GRADCHECK_TOLERANCE = 1e-4

LOSS_COLUMNS = ("step", "epoch", "lr", "gan_g", "gan_f", "disc_x", "disc_y", "cyc", "idt", "total_gen")

log = logging.getLogger("cyclegan.cli")


def _write_text(path, text: str):
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def loss_csv(history: list[LossRecord]) -> str:
    """Fixed-schema per-step loss table; shortest round-trip float text
    keeps reruns byte-identical."""
    lines = [",".join(LOSS_COLUMNS)]
    for rec in history:
        v = rec.values
        lines.append(",".join([
            str(rec.step), str(rec.epoch), repr(rec.lr),
            repr(v.gan_g), repr(v.gan_f), repr(v.disc_x), repr(v.disc_y),
            repr(v.cyc), repr(v.idt), repr(v.total_gen),
        ]))
    return "\n".join(lines) + "\n"


def _load_domains(rc: RunConfig):
    """Training and held-out samples plus the ground-truth map, if any.

    Synthetic mode draws one pool and splits it, so the held-out images
    are fresh draws never seen in training. Directory mode has no known
    mapping; evaluation falls back to cycle metrics over the full set.
    """
    res = rc.train.resolution
    if rc.synthetic is not None:
        total = rc.synthetic_count + rc.eval_count
        dx, dy, oracle = make_synthetic_pair(rc.synthetic, total, res, rc.train.seed)
        n = rc.synthetic_count
        return dx.samples[:n], dy.samples[:n], dx.samples[n:], dy.samples[n:], oracle
    dx = load_domain(rc.data_x, res, rc.train.seed)
    dy = load_domain(rc.data_y, res, rc.train.seed)
    return dx.samples, dy.samples, dx.samples, dy.samples, None


def cmd_train(args) -> int:
    rc = parse_run_config(args.config)
    os.makedirs(rc.output_dir, exist_ok=True)
    train_x, train_y, eval_x, eval_y, oracle = _load_domains(rc)

    if rc.checkpoint:
        state = load_state(rc.checkpoint)
        if state.cfg != rc.train:
            raise ConfigError(
                f"{args.config}: checkpoint {rc.checkpoint} was trained with a different "
                "configuration; make the run file match to resume")
        log.info("resuming from %s at epoch %d", rc.checkpoint, state.epoch)
    else:
        state = init_state(rc.train)

    def sink(s):
        save_checkpoint(s, os.path.join(rc.output_dir, f"checkpoint_ep{s.epoch:04d}.cgck"))

    history = train(state, train_x, train_y, checkpoint_sink=sink)
    save_checkpoint(state, os.path.join(rc.output_dir, "final.cgck"))
    _write_text(os.path.join(rc.output_dir, "losses.csv"), loss_csv(history))
    print(f"trained {len(history)} steps to epoch {state.epoch}; outputs in {rc.output_dir}")
    return EXIT_OK


def _require_matching_resolution(cfg_res: int, run_res: int, source: str):
    if cfg_res != run_res:
        raise ConfigError(
            f"{source}: run file resolution {run_res} does not match "
            f"checkpoint resolution {cfg_res}")


def cmd_eval(args) -> int:
    rc = parse_run_config(args.config)
    if not rc.checkpoint:
        raise ConfigError(f"{args.config}: eval requires checkpoint = <path>")
    state = load_state(rc.checkpoint)
    _require_matching_resolution(state.cfg.resolution, rc.train.resolution, args.config)
    _, _, eval_x, eval_y, oracle = _load_domains(rc)

    report = evaluate(state.model, eval_x, eval_y, oracle, variant=state.cfg.variant)
    os.makedirs(rc.output_dir, exist_ok=True)
    _write_text(os.path.join(rc.output_dir, "report.txt"), report_text(report))
    _write_text(os.path.join(rc.output_dir, "report.csv"), report_csv(report))
    export_triptychs(state.model, eval_x[: min(4, len(eval_x))],
                     os.path.join(rc.output_dir, "triptychs"))
    sys.stdout.write(report_text(report))
    return EXIT_OK


def cmd_ablate(args) -> int:
    rc = parse_run_config(args.config)
    train_x, train_y, eval_x, eval_y, oracle = _load_domains(rc)
    table = run_ablation(rc.train, train_x, train_y, eval_x, eval_y, oracle,
                         workers=rc.workers, keep_models=True)

    os.makedirs(rc.output_dir, exist_ok=True)
    _write_text(os.path.join(rc.output_dir, "ablation.csv"), ablation_csv(table))
    blocks = []
    for variant, report in table.rows.items():
        if report is None:
            blocks.append(f"[{variant}]\nfailed: {table.failed[variant]}\n")
        else:
            blocks.append(f"[{variant}]\n{report_text(report)}")
    _write_text(os.path.join(rc.output_dir, "ablation.txt"), "\n".join(blocks))
    for variant, model in (table.models or {}).items():
        export_triptychs(model, eval_x[: min(3, len(eval_x))],
                         os.path.join(rc.output_dir, "triptychs"), prefix=variant)
    sys.stdout.write(ablation_csv(table))
    return EXIT_OK


def cmd_translate(args) -> int:
    state = load_state(args.checkpoint)
    model = state.model
    if args.direction == "x2y":
        spec, params = model.g_spec, model.g_params
    else:
        spec, params = model.f_spec, model.f_params
    res = state.cfg.resolution

    os.makedirs(args.output_dir, exist_ok=True)
    written = 0
    for name in sorted(os.listdir(args.input_dir)):
        path = os.path.join(args.input_dir, name)
        if not os.path.isfile(path):
            continue
        try:
            with Image.open(path) as img:
                rgb = img.convert("RGB")
        except Exception as e:
            log.warning("skipping %s: %s", path, e)
            continue
        arr = np.asarray(rgb)
        if arr.shape[0] != res or arr.shape[1] != res:
            raise ConfigError(
                f"{path}: image is {arr.shape[1]}x{arr.shape[0]}, "
                f"the model expects {res}x{res}")
        x = bytes_to_unit(arr.transpose(2, 0, 1))[None]
        with no_grad():
            out = forward(spec, params, Tensor(x))
        out_bytes = unit_to_bytes(out.data[0]).transpose(1, 2, 0)
        stem = os.path.splitext(name)[0]
        dest = os.path.join(args.output_dir, f"{stem}_{args.direction}.png")
        tmp = dest + ".tmp"
        Image.fromarray(out_bytes, mode="RGB").save(tmp, format="PNG")
        os.replace(tmp, dest)
        written += 1
    if written == 0:
        raise ConfigError(f"no inputs decoded in {args.input_dir}")
    print(f"wrote {written} images to {args.output_dir}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rows = gradcheck_suite.run_suite(seeds=args.seeds)
    all_ok = True
    for name, err in rows:
        ok = err < args.tolerance
        all_ok = all_ok and ok
        print(f"{name:<20} {err:.3e}  {'ok' if ok else 'FAIL'}")
    print(f"{len(rows)} ops checked over {args.seeds} seeds; tolerance {args.tolerance:g}")
    return EXIT_OK if all_ok else EXIT_NUMERIC


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclegan",
        description="Unpaired image-to-image translation with cycle-consistent "
                    "adversarial networks, on a self-contained numpy engine.",
        epilog=f"Environment: {LOG_ENV} sets log verbosity (DEBUG, INFO, WARNING, ERROR).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    config_help = "run file of `key = value` lines; defaults shown below"
    key_docs = "config keys and defaults:\n" + describe_keys()

    p = sub.add_parser("train", help="train a model from a run config",
                       epilog=key_docs, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", required=True, help=config_help)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="apply a trained mapping to a directory of images")
    p.add_argument("--checkpoint", required=True, help="checkpoint file to load")
    p.add_argument("--input-dir", required=True, help="directory of input images")
    p.add_argument("--direction", required=True, choices=("x2y", "y2x"),
                   help="x2y applies the X-to-Y mapping, y2x the reverse")
    p.add_argument("--output-dir", required=True, help="directory for translated images")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval", help="score a checkpoint on held-out data",
                       epilog=key_docs, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", required=True, help=config_help)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score every objective variant",
                       epilog=key_docs, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", required=True, help=config_help)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--seeds", type=int, default=10, help="random draws per op (default 10)")
    p.add_argument("--tolerance", type=float, default=GRADCHECK_TOLERANCE,
                   help="max relative error allowed (default 1e-4)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    level_name = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalDivergence as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
