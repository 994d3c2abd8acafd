"""``robustdrop`` command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 output
I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment as ex
from . import pet as pet_mod
from .plotting import RenderError, render_charts

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

# --seed N sets the workload base seed to N and the execution base seed to
# N + SEED_STRIDE, keeping the two streams apart.
SEED_STRIDE = 1_000_003


def _default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="robustdrop",
        description="Probabilistic task dropping experiments for oversubscribed clusters.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("config", help="experiment config (JSON)")
        sp.add_argument("-o", "--out", help=out_help)
        sp.add_argument("--seed", type=int, help="override the base seeds")

    g = sub.add_parser("gen-pet", help="generate a PET matrix file from a config")
    common(g, "PET file to write")

    for name, helptext in (
        ("run", "run the config's sweep grid"),
        ("sweep-eta", "effective-depth sweep (PAM + heuristic)"),
        ("sweep-beta", "improvement-factor sweep (PAM + heuristic)"),
        ("compare", "mapping x dropping-policy comparison"),
    ):
        sp = sub.add_parser(name, help=helptext)
        common(sp, "output directory (default: $ROBUSTDROP_OUT, then the config)")
        sp.add_argument("--jobs", type=int, default=_default_jobs(),
                        help="worker processes for trials (default: available cores)")
        sp.add_argument("--trace", action="store_true", help="write per-trial event traces")

    r = sub.add_parser("render", help="render every CSV in a directory to SVG")
    r.add_argument("dir")
    return p


def _load(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, workload_seed=args.seed, seed=args.seed + SEED_STRIDE)
    return cfg


def _gen_pet(args) -> int:
    cfg = _load(args)
    pet_doc = dict(cfg.pet)
    if args.seed is not None:
        pet_doc["seed"] = args.seed
    pet = ex.build_pet(pet_doc)
    out = Path(args.out or "pet.json")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        pet_mod.save(pet, out)
    except OSError as exc:
        raise ex.OutputError(exc.errno, f"cannot write {out}: {exc.strerror}") from None
    print(out)
    return EXIT_OK


_RUNNERS = {
    "run": ex.run_experiment,
    "sweep-eta": ex.sweep_eta,
    "sweep-beta": ex.sweep_beta,
    "compare": ex.compare_policies,
}


def _experiment(args) -> int:
    cfg = _load(args)
    if args.jobs < 1:
        raise ex.ConfigError("--jobs", "must be >= 1")
    out = ex.resolve_output_dir(args.out, cfg)
    _RUNNERS[args.command](cfg, out, jobs=args.jobs, trace=args.trace)
    try:
        (out / "config.json").write_text(
            json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise ex.OutputError(exc.errno, f"cannot write {out}: {exc.strerror}") from None
    for svg in render_charts(out):
        print(svg)
    return EXIT_OK


def _render(args) -> int:
    d = Path(args.dir)
    if not d.is_dir():
        raise ex.OutputError(2, f"not a directory: {d}")
    for svg in render_charts(d):
        print(svg)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "gen-pet":
            return _gen_pet(args)
        if args.command == "render":
            return _render(args)
        return _experiment(args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ex.OutputError, PermissionError) as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
