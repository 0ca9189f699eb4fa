"""Command-line entry point: one subcommand per workflow.

Configs are flat ``key = value`` text files ('#' comments, blank lines
allowed); ``--set key=value`` flags override file values.  The resolved
configuration is echoed to ``effective.cfg`` in the output directory, and
re-running from that echo reproduces the same outputs (wall-clock
metadata aside).  Unknown keys are rejected with the offending line.

Exit codes: 0 success, 1 usage/config error, 2 numerical abort,
3 acceptance failure (``report`` only).
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .diagnostics import energy_residual
from .harness import (
    StudyConfig,
    emit_report,
    load_csv,
    run_study,
    worker_count,
)
from .solver import SimConfig, simulate, simulate_linear, write_snapshot

log = logging.getLogger(__name__)

SERIES_HEADER = "time,energy_sq,dissipation0,grad_m_sq,sobolev_m"


def _parse_dt(text: str):
    return "auto" if text == "auto" else float(text)


def _parse_float_or_none(text: str):
    return None if text.lower() == "none" else float(text)


def _parse_float_list(text: str):
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_float_list_or_none(text: str):
    return None if text.lower() == "none" else _parse_float_list(text)


def _parse_str_or_none(text: str):
    return None if text.lower() == "none" else text


def _parse_int_or_none(text: str):
    return None if text.lower() == "none" else int(text)


SIM_KEYS = {
    "n_points": int,
    "box_length": float,
    "eps": float,
    "mu": float,
    "nu": float,
    "m": int,
    "dt": _parse_dt,
    "t_end": float,
    "snapshot_times": _parse_float_list_or_none,
    "seed": int,
    "spectrum_width": float,
    "target_norm": float,
    "support_radius": _parse_float_or_none,
    "nonlinearity": str,
    "frame": str,
}

STUDY_KEYS = {
    "kind": str,
    "eps_list": _parse_float_list,
    "dt_list": _parse_float_list_or_none,
    "theta": float,
    "slab_l": int,
    "t1": float,
    "c_tilde": float,
    "name": _parse_str_or_none,
    "workers": _parse_int_or_none,
}

RUN_COMMANDS = ("simulate", "linear")
STUDY_COMMANDS = {
    "scaling": "stability",
    "error": "error",
    "limit": None,  # limit-linear or limit-nonlinear, from the kind key
    "kernel": "kernel",
    "verify-propagator": "propagator-verify",
    "energy": "energy",
}


class CliError(Exception):
    """Usage or configuration problem (exit code 1)."""


def _allowed_keys(command: str):
    keys = dict(SIM_KEYS)
    if command in STUDY_COMMANDS:
        keys.update(STUDY_KEYS)
    return keys


def read_config_file(path: str):
    """Flat key=value lines -> {key: (raw_value, lineno)}."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as err:
        raise CliError(f"cannot read config {path}: {err}") from err
    entries: dict = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CliError(
                f"{path}:{lineno}: expected 'key = value', got: {line.rstrip()}"
            )
        key, _, raw = stripped.partition("=")
        entries[key.strip()] = (raw.strip(), lineno)
    return entries


def resolve_config(command: str, config_path: str | None, overrides):
    """Merge config file and --set overrides into typed key/value pairs."""
    allowed = _allowed_keys(command)
    raw: dict = {}
    if config_path:
        for key, (value, lineno) in read_config_file(config_path).items():
            if key not in allowed:
                raise CliError(
                    f"{config_path}:{lineno}: unknown key {key!r} for "
                    f"'{command}' (allowed: {', '.join(sorted(allowed))})"
                )
            raw[key] = (value, f"{config_path}:{lineno}")
    for item in overrides or []:
        if "=" not in item:
            raise CliError(f"--set needs key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in allowed:
            raise CliError(f"--set: unknown key {key!r} for '{command}'")
        raw[key] = (value.strip(), f"--set {item}")
    typed: dict = {}
    for key, (value, where) in raw.items():
        try:
            typed[key] = allowed[key](value)
        except (TypeError, ValueError) as err:
            raise CliError(f"{where}: bad value for {key!r}: {err}") from err
    return typed


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_effective_config(path: str, command: str, sim: SimConfig,
                           study: StudyConfig | None, workers) -> None:
    keys = {name: getattr(sim, name) for name in SIM_KEYS}
    if study is not None:
        keys.update(
            kind=study.kind, eps_list=study.eps_list, dt_list=study.dt_list,
            theta=study.theta, slab_l=study.slab_l, t1=study.t1,
            c_tilde=study.c_tilde, name=study.name, workers=workers,
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# effective configuration for '{command}'\n")
        for key in sorted(keys):
            fh.write(f"{key} = {_format_value(keys[key])}\n")


def build_sim_config(values: dict) -> SimConfig:
    sim_values = {k: v for k, v in values.items() if k in SIM_KEYS}
    try:
        return SimConfig(**sim_values)
    except (TypeError, ValueError) as err:
        raise CliError(f"invalid run configuration: {err}") from err


def build_study_config(command: str, values: dict, out_dir: str) -> StudyConfig:
    kind = STUDY_COMMANDS[command]
    if kind is None:
        kind = values.get("kind")
        if kind not in ("limit-linear", "limit-nonlinear"):
            raise CliError(
                "'limit' needs kind = limit-linear or limit-nonlinear"
            )
    elif values.get("kind") not in (None, kind):
        raise CliError(
            f"'{command}' runs kind {kind!r}; remove the conflicting kind key"
        )
    base = build_sim_config(values)
    study_values = {
        k: values[k]
        for k in ("eps_list", "dt_list", "theta", "slab_l", "t1", "c_tilde", "name")
        if k in values
    }
    label = study_values.get("name") or kind
    out_path = os.path.join(out_dir, f"{label}.csv")
    try:
        return StudyConfig(kind=kind, base=base, out_path=out_path, **study_values)
    except (TypeError, ValueError) as err:
        raise CliError(f"invalid study configuration: {err}") from err


def _write_series(path: str, traj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SERIES_HEADER + "\n")
        for row in zip(traj.step_times, traj.step_energy_sq,
                       traj.step_dissipation0, traj.step_grad_m_sq,
                       traj.step_sobolev_m):
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _cmd_run(command: str, args) -> int:
    values = resolve_config(command, args.config, args.set)
    cfg = build_sim_config(values)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    write_effective_config(
        os.path.join(out_dir, "effective.cfg"), command, cfg, None, None
    )
    traj = simulate(cfg) if command == "simulate" else simulate_linear(cfg)
    _write_series(os.path.join(out_dir, "series.csv"), traj)
    for index, snap in enumerate(traj.snapshots):
        write_snapshot(
            os.path.join(out_dir, f"state_{index:03d}.snap"), snap.state
        )
    summary = {
        "command": command,
        "aborted": traj.aborted,
        "abort_reason": traj.abort_reason,
        "dt_effective": traj.dt_effective,
        "energy_residual": energy_residual(traj),
        "div_max": max(s.div_max for s in traj.snapshots),
        "sup_sobolev_m": float(np.max(traj.step_sobolev_m)),
        "snapshot_times": [s.state.time for s in traj.snapshots],
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{command}: wrote {out_dir} "
          f"(residual {summary['energy_residual']:.3e}, "
          f"{len(traj.snapshots)} snapshots)")
    if traj.aborted:
        print(f"numerical abort: {traj.abort_reason}", file=sys.stderr)
        return 2
    return 0


def _cmd_study(command: str, args) -> int:
    values = resolve_config(command, args.config, args.set)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    study = build_study_config(command, values, out_dir)
    workers = worker_count(values.get("workers"))
    write_effective_config(
        os.path.join(out_dir, "effective.cfg"), command, study.base, study,
        values.get("workers"),
    )
    records = run_study(study, workers=workers)
    failed = [r for r in records if r.observable == "failed"]
    print(f"{command}: {len(records)} records -> {study.out_path}"
          + (f" ({len(failed)} failed runs)" if failed else ""))
    return 2 if failed else 0


def _cmd_report(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.in_dir, "*.csv")))
    if not paths:
        raise CliError(f"no CSV files found in {args.in_dir}")
    records = []
    for path in paths:
        records.extend(load_csv(path))
    out_path = args.out or os.path.join(args.in_dir, "report.json")
    report = emit_report(records, out_path)
    for study, entry in sorted(report["studies"].items()):
        verdict = "pass" if entry["passed"] else "FAIL"
        print(f"{study} [{entry['kind']}]: {verdict}")
    print(f"report: {out_path} -> {'pass' if report['passed'] else 'FAIL'}")
    return 0 if report["passed"] else 3


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit 1 (not argparse's 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="alfven",
                     description="Spectral studies of strong-field "
                                 "incompressible MHD perturbations.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase log verbosity (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_out=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out", required=needs_out,
                       help="output directory for artifacts")

    for name, help_text in [
        ("simulate", "integrate the nonlinear rescaled system"),
        ("linear", "propagate the linear flow exactly"),
    ]:
        add_common(sub.add_parser(name, help=help_text))
    for name, help_text in [
        ("scaling", "stability sweep: sup-norm boundedness over eps"),
        ("error", "nonlinear-vs-linear error sweep over eps"),
        ("limit", "slab sup-norm limit sweep (linear or nonlinear kind)"),
        ("kernel", "kernel region partition study"),
        ("verify-propagator", "integrator order and exactness checks"),
        ("energy", "energy-balance check on the reference run"),
    ]:
        add_common(sub.add_parser(name, help=help_text))
    rep = sub.add_parser("report", help="aggregate study CSVs into a verdict")
    rep.add_argument("--in", dest="in_dir", required=True,
                     help="directory of study CSV files")
    rep.add_argument("--out", help="report path (default <in>/report.json)")
    return parser


def parse_and_dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2),
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command in RUN_COMMANDS:
            return _cmd_run(args.command, args)
        if args.command in STUDY_COMMANDS:
            return _cmd_study(args.command, args)
        return _cmd_report(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
