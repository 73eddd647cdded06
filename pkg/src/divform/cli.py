"""Command-line front end for the experiment runners.

Exit codes: 0 all declared criteria pass, 1 some rows failed, 2 usage
errors (argparse), 3 config errors.  Result CSVs are byte-deterministic
for a fixed config and seed; wall-clock times only ever appear in the
JSON summary.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib

from .experiments import (
    ALL_EXPERIMENTS,
    SCHEMA,
    ConfigError,
    rows_to_csv,
    run_experiment,
)

_TOP_LEVEL_KEYS = {"seed", "threads", "out"}
_SECTION_KEYS = {"garding", "perturb_sweep", "norms", "poincare", "newton", "duality"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="divform",
        description="Desk-scale experiments for divergence-form elliptic systems.",
    )
    sub = ap.add_subparsers(dest="command", required=True, metavar="EXPERIMENT")
    helps = {
        "garding": "coercivity constants, the A_rho window, BFS convergence",
        "perturb-sweep": "series convergence over an (s, 1/p) lattice",
        "norms": "norm-form brackets, duality constants, growth exponents",
        "poincare": "weighted Poincare ratios and boundary normalization",
        "newton": "Newton-potential norm table, inversion and adjoint checks",
        "duality": "pairing-identity trials at conjugate exponents",
        "all": "every experiment in sequence",
    }
    for name in ALL_EXPERIMENTS + ["all"]:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, default=None, help="TOML config file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.add_argument(
            "--format", choices=("csv", "json"), default="csv",
            help="result table format (default csv)",
        )
    return ap


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        cfg = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed TOML in {path}: {e}") from e
    bad = set(cfg) - _TOP_LEVEL_KEYS - _SECTION_KEYS
    if bad:
        raise ConfigError(
            f"unknown top-level config keys {sorted(bad)}; expected "
            f"{sorted(_TOP_LEVEL_KEYS)} or sections {sorted(_SECTION_KEYS)}"
        )
    return cfg


def _resolve_out(flag: Path | None, config: dict) -> Path:
    if flag is not None:
        return flag
    env = os.environ.get("DIVFORM_OUT")
    if env:
        return Path(env)
    if "out" in config:
        return Path(config["out"])
    return Path("out")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0

    try:
        config = load_config(ns.config)
        if ns.seed is not None:
            config["seed"] = int(ns.seed)
        if ns.threads is not None:
            config["threads"] = int(ns.threads)
        out_dir = _resolve_out(ns.out, config)
        names = ALL_EXPERIMENTS if ns.command == "all" else [ns.command]

        out_dir.mkdir(parents=True, exist_ok=True)
        failures: list[str] = []
        summary = {
            "schema": SCHEMA,
            "command": ns.command,
            "format": ns.format,
            "experiments": {},
        }
        t0 = time.perf_counter()
        for name in names:
            rows, artifacts, runtime = run_experiment(name, config)
            stem = name.replace("-", "_")
            if ns.format == "csv":
                table = out_dir / f"{stem}.csv"
                table.write_text(rows_to_csv(rows), encoding="utf-8", newline="")
            else:
                table = out_dir / f"{stem}.json"
                table.write_text(
                    json.dumps([r.flat() for r in rows], indent=2, sort_keys=True,
                               default=str) + "\n",
                    encoding="utf-8",
                )
            for fname, text in artifacts.items():
                (out_dir / fname).write_text(text, encoding="utf-8")
            bad = [r for r in rows if not r.passed]
            failures += [f"{name}: {r.name} ({r.criterion})" for r in bad]
            summary["experiments"][name] = {
                "rows": len(rows),
                "pass": len(rows) - len(bad),
                "fail": len(bad),
                "runtime_seconds": runtime,
                "table": table.name,
                "artifacts": sorted(artifacts),
            }
            print(f"{name}: {len(rows)} rows, {len(rows) - len(bad)} pass, "
                  f"{len(bad)} fail -> {table}")
        summary["runtime_seconds"] = time.perf_counter() - t0
        (out_dir / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3

    if failures:
        print(f"failed criteria ({len(failures)}):", file=sys.stderr)
        for f in failures:
            print(f"  {f}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
