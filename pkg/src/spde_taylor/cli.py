"""Command-line entry points.

Two subcommands:

* ``spde-taylor symbolic --wood <text>`` prints the tree count, active
  nodes, symbolic order and computable terms of a wood.
* ``spde-taylor converge ...`` runs a Monte-Carlo order experiment and
  writes report.csv / report.json.

A config file of ``key = value`` lines (``#`` comments allowed) may supply
any converge option; explicit flags win.  Exit codes: 0 when the verdict is
pass, 2 when it is fail, 1 on any error.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    ConfigError,
    ExperimentConfig,
    HarnessError,
    report_emit,
    run_convergence,
    symbolic_report,
)
from .engine import EngineError
from .models import ModelError
from .trees import TreeError

_CONFIG_KEYS = {
    "model": str,
    "scheme": str,
    "t_end": float,
    "fine": int,
    "ladder": str,
    "paths": int,
    "seed": int,
    "r": float,
    "p": float,
    "multi_step": bool,
    "modes": int,
    "noise_modes": int,
    "out": str,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def load_config_file(path: str) -> dict:
    """Read ``key = value`` lines; unknown keys are an error."""
    values: dict = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, text = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            kind = _CONFIG_KEYS[key]
            try:
                values[key] = _parse_bool(text) if kind is bool else kind(text)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return values


def _parse_ladder(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.replace(" ", "").split(",") if part)
    except ValueError as exc:
        raise ConfigError(f"bad ladder {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spde-taylor",
        description="Tree-indexed Taylor schemes for semilinear SPDEs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    symbolic = sub.add_parser("symbolic", help="inspect a wood symbolically")
    symbolic.add_argument("--wood", required=True, help="wood text, e.g. (0);(1*);(2*)")

    converge = sub.add_parser("converge", help="run a strong-order experiment")
    converge.add_argument("--config", help="key = value config file")
    converge.add_argument("--model", help="heat-mult or heat-add")
    scheme = converge.add_mutually_exclusive_group()
    scheme.add_argument("--scheme", help="builtin scheme name or wood text")
    scheme.add_argument("--wood", help="wood text (alias for --scheme)")
    converge.add_argument("--paths", type=int, help="Monte-Carlo path count")
    converge.add_argument("--seed", type=int, help="master seed")
    converge.add_argument(
        "--fine", type=int, help="log2 fine substeps over [0, t_end]"
    )
    converge.add_argument(
        "--ladder",
        help="comma-separated log2 step denominators, e.g. 4,5,6,7,8",
    )
    converge.add_argument("--out", help="output directory for report files")
    converge.add_argument(
        "--multi-step",
        action="store_true",
        default=None,
        help="iterate the scheme to t_end (global error) instead of one step",
    )
    converge.add_argument("--p", type=float, help="Lp norm exponent (default 2)")
    converge.add_argument("--r", type=float, help="exponent offset for heat-mult")
    converge.add_argument("--t-end", type=float, help="time horizon (default 1)")
    converge.add_argument("--modes", type=int, help="spectral modes (default 64)")
    converge.add_argument(
        "--noise-modes", type=int, help="noise modes (default 64)"
    )
    return parser


def _converge_config(args: argparse.Namespace) -> ExperimentConfig:
    values = load_config_file(args.config) if args.config else {}
    flags = {
        "model": args.model,
        "scheme": args.scheme if args.scheme is not None else args.wood,
        "paths": args.paths,
        "seed": args.seed,
        "fine": args.fine,
        "ladder": args.ladder,
        "out": args.out,
        "multi_step": args.multi_step,
        "p": args.p,
        "r": args.r,
        "t_end": args.t_end,
        "modes": args.modes,
        "noise_modes": args.noise_modes,
    }
    for key, value in flags.items():
        if value is not None:
            values[key] = value
    defaults = ExperimentConfig()
    ladder = values.get("ladder")
    return ExperimentConfig(
        model=values.get("model", defaults.model),
        scheme=values.get("scheme", defaults.scheme),
        t_end=float(values.get("t_end", defaults.t_end)),
        fine_log2=int(values.get("fine", defaults.fine_log2)),
        ladder_log2=_parse_ladder(ladder) if isinstance(ladder, str) else (
            ladder or defaults.ladder_log2
        ),
        paths=int(values.get("paths", defaults.paths)),
        seed=int(values.get("seed", defaults.seed)),
        r=float(values.get("r", defaults.r)),
        p_norm=float(values.get("p", defaults.p_norm)),
        multi_step=bool(values.get("multi_step", defaults.multi_step)),
        modes=int(values.get("modes", defaults.modes)),
        noise_modes=int(values.get("noise_modes", defaults.noise_modes)),
        out_dir=values.get("out", defaults.out_dir),
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "symbolic":
            print(symbolic_report(args.wood))
            return 0
        config = _converge_config(args)
        report = run_convergence(config)
        for row in report.rows:
            print(
                f"h={row.h:.6g}  error={row.error:.6e}  stderr={row.stderr:.2e}  "
                f"paths={row.n_paths}  excluded={row.n_excluded}"
            )
        print(
            f"slope={report.slope:.4f}  predicted={report.predicted:.4f}  "
            f"window=[{report.lower_bound:.4f}, {report.upper_bound:.4f}]  "
            f"verdict={'pass' if report.verdict else 'fail'}"
        )
        if config.out_dir:
            csv_path, json_path = report_emit(report, config.out_dir)
            print(f"wrote {csv_path} and {json_path}")
        return 0 if report.verdict else 2
    except (HarnessError, EngineError, ModelError, TreeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
