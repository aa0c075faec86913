"""Command-line front end.

Subcommands: ``model gen``, ``model info``, and ``exp1`` through ``exp4``.
Experiment configs load from a JSON file (``--config``) whose keys mirror the
config dataclass fields; individual flags override file values.  Exit codes:
0 on success, 2 on configuration or input errors, 3 when ``--check`` finds a
failed criterion.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, model
from .errors import SocIcnnError
from .inference import InferenceConfig
from .model import ArchSpec, DegeneracySpec

_PRESETS = {
    "exp1": ArchSpec(20, (64, 64, 64, 64), (20, 20), (20, 20)),
    "exp2": ArchSpec(10, (32, 32, 32), (10, 10), (10, 10)),
    "exp4": ArchSpec(10, (32, 32, 32), (8,), (8, 8)),
}

_EXPERIMENTS = {
    "exp1": (experiments.Exp1Config, experiments.run_exp1),
    "exp2": (experiments.Exp2Config, experiments.run_exp2),
    "exp3": (experiments.Exp3Config, experiments.run_exp3),
    "exp4": (experiments.Exp4Config, experiments.run_exp4),
}


class CliError(Exception):
    """User-facing configuration problem; maps to exit code 2."""


def _fmt_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(table: experiments.Table, path: Path) -> None:
    lines = [",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(_fmt_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _write_json(table: experiments.Table, path: Path) -> None:
    obj = {
        "name": table.name,
        "columns": list(table.columns),
        "rows": [[_jsonable(v) for v in row] for row in table.rows],
    }
    path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def _print_table(table: experiments.Table) -> None:
    print(f"[{table.name}]")
    print(",".join(table.columns))
    for row in table.rows:
        print(",".join(_fmt_cell(v) for v in row))


def _load_config(cls, path: str | None, overrides: dict):
    values = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                values = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"invalid JSON in config file {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise CliError("config file must hold a JSON object")
    values.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    if "widths" in values:
        values["widths"] = tuple(values["widths"])
    for key in ("quad_dims", "cone_dims", "radii"):
        if key in values:
            values[key] = tuple(values[key])
    if "degeneracy" in values and isinstance(values["degeneracy"], dict):
        values["degeneracy"] = DegeneracySpec(**values["degeneracy"])
    if "solver" in values and isinstance(values["solver"], dict):
        values["solver"] = InferenceConfig(**values["solver"])
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad config value: {exc}") from exc


def _parse_dims(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise CliError(f"expected comma-separated integers, got {text!r}") from exc


def _cmd_model_gen(args) -> int:
    if args.preset == "degenerate-2d":
        params, _ = model.build_degenerate_2d()
    else:
        if args.preset is not None:
            arch = _PRESETS[args.preset]
        else:
            arch = ArchSpec(
                args.input_dim,
                (args.width,) * args.depth,
                _parse_dims(args.quad_dims),
                _parse_dims(args.cone_dims),
            )
        params = model.build_random(args.seed, arch)
    model.save_model(params, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_model_info(args) -> int:
    params = model.load_model(args.path)
    trace_dims = ", ".join(str(w) for w in params.widths)
    print(f"input_dim: {params.input_dim}")
    print(f"layers: {params.n_layers} (widths {trace_dims})")
    print(f"quadratic modules: {params.n_quad} (dims {[B.shape[0] for B in params.B]})")
    print(f"conic modules: {params.n_cone} (dims {[A.shape[0] for A in params.A]})")
    print(f"seed: {params.seed}")
    total = sum(W.size + U.size + b.size for W, U, b in zip(params.W, params.U, params.b))
    total += params.c.size + params.v.size + 1
    total += sum(B.size + e.size + 1 for B, e in zip(params.B, params.e))
    total += sum(A.size + d.size + 1 for A, d in zip(params.A, params.d))
    print(f"parameters: {total}")
    print("validation: ok")
    return 0


def _cmd_exp(args, name: str) -> int:
    cls, runner = _EXPERIMENTS[name]
    overrides = {
        key: getattr(args, key, None)
        for key in ("seed", "samples", "points", "trials", "directions",
                    "branches", "probes", "queries")
        if hasattr(args, key)
    }
    cfg = _load_config(cls, args.config, overrides)
    out = runner(cfg)
    for table in out.tables:
        _print_table(table)
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = _write_csv if args.format == "csv" else _write_json
        for table in out.tables:
            path = out_dir / f"{name}_{table.name}.{args.format}"
            writer(table, path)
            print(f"wrote {path}")
    if args.check:
        failed = 0
        for check in out.checks:
            tag = "PASS" if check.passed else "FAIL"
            print(f"[{tag}] {check.name}: {check.detail}")
            failed += 0 if check.passed else 1
        if failed:
            print(f"{failed} check(s) failed")
            return 3
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="socicnn",
        description="Exact dual geometry and white-box inference experiments "
        "for second-order-cone input convex networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="generate or inspect model files")
    model_sub = p_model.add_subparsers(dest="model_command", required=True)
    p_gen = model_sub.add_parser("gen", help="draw a model and write it as JSON")
    p_gen.add_argument("--out", required=True, help="output path")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument(
        "--preset",
        choices=sorted(_PRESETS) + ["degenerate-2d"],
        help="named architecture; degenerate-2d ignores --seed",
    )
    p_gen.add_argument("--input-dim", type=int, default=20)
    p_gen.add_argument("--width", type=int, default=64)
    p_gen.add_argument("--depth", type=int, default=4)
    p_gen.add_argument("--quad-dims", default="20,20", help="comma-separated module dims")
    p_gen.add_argument("--cone-dims", default="20,20", help="comma-separated module dims")
    p_info = model_sub.add_parser("info", help="validate and summarize a model file")
    p_info.add_argument("path")

    extra_flags = {
        "exp1": ("samples",),
        "exp2": ("points", "trials"),
        "exp3": ("directions", "branches", "probes"),
        "exp4": ("queries",),
    }
    help_text = {
        "exp1": "gradient readout agreement on random inputs",
        "exp2": "Hessian formula and quadratic-model accuracy",
        "exp3": "set-valued geometry at the degenerate anchor",
        "exp4": "white-box versus finite-difference inference",
    }
    for name in _EXPERIMENTS:
        p = sub.add_parser(name, help=help_text[name])
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="directory for result tables")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--check", action="store_true", help="evaluate pass/fail criteria")
        for flag in extra_flags[name]:
            p.add_argument(f"--{flag}", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "model":
            if args.model_command == "gen":
                return _cmd_model_gen(args)
            return _cmd_model_info(args)
        return _cmd_exp(args, args.command)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SocIcnnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
