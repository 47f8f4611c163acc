"""Command-line front end.

Commands::

    qsdc-qpa verify-tables
    qsdc-qpa run --channel intercept --rate 0.2 --message-hex cafe
    qsdc-qpa leakage --r 0.25 --m 2 --trials 1000000
    qsdc-qpa sweep --r-list 0.1,0.5 --m-list 1,2,3 --trials 100000

Exit codes: 0 completed, 1 verification failure, 2 usage or config error.
Results go to stdout (or ``--out``); progress goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from qsdc_qpa import __version__
from qsdc_qpa.protocol_sim import (
    MAX_SEED,
    ChannelKind,
    ChannelModel,
    ConfigError,
    ErrorEstimationError,
    LeakageEstimate,
    ProtocolConfig,
    ProtocolResult,
    leakage_monte_carlo,
    run_protocol,
)
from qsdc_qpa.qpa_engine import QPA_TABLES, Table, verify_tables

TOOL = "qsdc-qpa"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

SWEEP_HEADER = ["r", "m", "trials", "observed_p", "predicted_p", "std_error", "z"]

# stream id used to derive per-cell seeds in a sweep
SWEEP_STREAM = 100
# stream id used to draw a --message-random message
MESSAGE_STREAM = 8

RUN_DEFAULTS: dict[str, Any] = {
    "n_batch": 10000,
    "check_fraction": 0.1,
    "error_threshold": 0.05,
    "group_size_m": 3,
    "kind": "ideal",
    "rate": 0.0,
}
LEAKAGE_DEFAULTS: dict[str, Any] = {"r": 0.25, "m": 2, "trials": 1_000_000}
SWEEP_DEFAULTS: dict[str, Any] = {"r_list": [0.1, 0.25, 0.5], "m_list": [1, 2, 3, 4], "trials": 1_000_000}


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    common.add_argument("--seed", type=_seed, default=None, help="root seed (default 0)")
    common.add_argument("--format", dest="output_format", choices=("json", "csv"), default=None)
    common.add_argument("--out", type=Path, default=None, help="output file (default stdout)")

    parser = argparse.ArgumentParser(prog=TOOL, description="Quantum privacy amplification for QSDC.")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("verify-tables", parents=[common], help="check the output tables against the circuit")

    run = sub.add_parser("run", parents=[common], help="simulate the full protocol")
    run.add_argument("--n-batch", dest="n_batch", type=int)
    run.add_argument("--check-fraction", dest="check_fraction", type=float)
    run.add_argument("--threshold", dest="error_threshold", type=float)
    run.add_argument("--group-size", dest="group_size_m", type=int)
    run.add_argument("--channel", dest="kind", choices=[k.value for k in ChannelKind])
    run.add_argument("--rate", type=float)
    msg = run.add_mutually_exclusive_group()
    msg.add_argument("--message-hex", dest="message_hex")
    msg.add_argument("--message-file", dest="message_file")
    msg.add_argument("--message-random", dest="message_random", type=int, metavar="NBITS")

    leak = sub.add_parser("leakage", parents=[common], help="Monte Carlo of the leakage law r**m")
    leak.add_argument("--r", type=float)
    leak.add_argument("--m", type=int)
    leak.add_argument("--trials", type=int)

    sweep = sub.add_parser("sweep", parents=[common], help="leakage Monte Carlo over an (r, m) grid")
    sweep.add_argument("--r-list", dest="r_list", type=_float_list)
    sweep.add_argument("--m-list", dest="m_list", type=_int_list)
    sweep.add_argument("--trials", type=int)
    return parser


def effective_config(args: argparse.Namespace, defaults: Mapping[str, Any]) -> dict[str, Any]:
    """Defaults, then the config file, then explicit flags."""
    config = dict(defaults)
    if args.config is not None:
        try:
            loaded = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        if "channel" in loaded and "kind" not in loaded:
            loaded["kind"] = loaded.pop("channel")
        config.update(loaded)
    flags = vars(args)
    for key in list(defaults) + ["seed", "message_hex", "message_file", "message_random"]:
        if flags.get(key) is not None:
            config[key] = flags[key]
    config.setdefault("seed", 0)
    return config


def bits_from_bytes(data: bytes) -> tuple[int, ...]:
    """Big-endian bit order within each byte."""
    return tuple(int(b) for b in np.unpackbits(np.frombuffer(data, dtype=np.uint8)))


def bits_to_str(bits: Sequence[int]) -> str:
    return "".join(str(b) for b in bits)


def resolve_message(config: Mapping[str, Any]) -> tuple[int, ...]:
    given = [k for k in ("message_hex", "message_file", "message_random") if config.get(k) is not None]
    if len(given) > 1:
        raise UsageError(f"give at most one message source, got {given}")
    if not given:
        return ()
    key = given[0]
    if key == "message_hex":
        try:
            return bits_from_bytes(bytes.fromhex(config[key]))
        except ValueError as exc:
            raise UsageError(f"message_hex: {exc}") from exc
    if key == "message_file":
        try:
            return bits_from_bytes(Path(config[key]).read_bytes())
        except OSError as exc:
            raise UsageError(f"message_file: {exc}") from exc
    try:
        nbits = int(config[key])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"message_random: {exc}") from exc
    if nbits < 0:
        raise UsageError("message_random must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(config["seed"], spawn_key=(MESSAGE_STREAM,)))
    return tuple(int(b) for b in rng.integers(0, 2, size=nbits))


def _header(command: str, config: Mapping[str, Any]) -> dict[str, Any]:
    return {"tool": TOOL, "version": __version__, "command": command, "seed": config["seed"]}


def _config_json(config: Mapping[str, Any]) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def protocol_row(result: ProtocolResult) -> dict[str, Any]:
    return {
        "detected_error_rate_e": result.detected_error_rate_e,
        "inferred_r": result.inferred_r,
        "aborted": result.aborted,
        "decoded_message": None if result.decoded_message is None else bits_to_str(result.decoded_message),
        "message_bit_errors": result.message_bit_errors,
        "eve_known_condensed_fraction": result.eve_known_condensed_fraction,
        "condensed_count": result.condensed_count,
        "check_sample_size": result.check_sample_size,
        "matched_check_size": result.matched_check_size,
        "eve_bit_guess_accuracy": result.eve_bit_guess_accuracy,
    }


def leakage_row(est: LeakageEstimate) -> dict[str, Any]:
    return {
        "r": est.r,
        "m": est.m,
        "trials": est.trials,
        "observed_p": est.observed_p,
        "predicted_p": est.predicted_p,
        "std_error": est.std_error,
        "z": est.z,
    }


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    # repr gives the shortest round-trip representation
    return repr(value) if isinstance(value, float) else str(value)


def render_csv(header: Mapping[str, Any], config: Mapping[str, Any], columns: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}={value}\n")
    buf.write(f"# config={_config_json(config)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row[c]) for c in columns])
    return buf.getvalue()


def render_json(header: Mapping[str, Any], config: Mapping[str, Any], key: str, payload: Any) -> str:
    doc = dict(header)
    doc["config"] = dict(config)
    doc[key] = payload
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


def verify_tables_report(tables: Mapping[int, Table] = QPA_TABLES) -> tuple[bool, dict[str, Any]]:
    report = verify_tables(tables)
    doc = {
        "passed": report.passed,
        "entries_passed": sum(e.passed for e in report.entries),
        "entries_total": len(report.entries),
        "marginals_passed": sum(m.passed for m in report.marginals),
        "marginals_total": len(report.marginals),
        "double_latin": {str(k): v for k, v in report.double_latin.items()},
        "closure": {str(k): v for k, v in report.closure.items()},
        "branch_balance_max_deviation": report.branch_balance_max_deviation,
        "entries": [
            {
                "control": str(e.control),
                "target": str(e.target),
                "outcome": e.outcome,
                "expected": None if e.expected is None else str(e.expected),
                "deviation": e.deviation,
                "passed": e.passed,
            }
            for e in report.entries
        ],
        "marginals": [
            {"control": str(m.control), "outcome": m.outcome, "deviation": m.deviation, "passed": m.passed}
            for m in report.marginals
        ],
        "failures": report.failures,
    }
    return report.passed, doc


def cmd_verify_tables(args: argparse.Namespace, tables: Mapping[int, Table] = QPA_TABLES) -> int:
    config = effective_config(args, {})
    passed, doc = verify_tables_report(tables)
    header = _header("verify-tables", config)
    if args.output_format == "csv":
        columns = ["kind", "control", "target", "outcome", "expected", "deviation", "passed"]
        rows = [dict(kind="entry", **e) for e in doc["entries"]]
        rows += [dict(kind="marginal", target=None, expected=None, **m) for m in doc["marginals"]]
        text = render_csv(header, config, columns, rows)
    else:
        text = render_json(header, config, "report", doc)
    _emit(text, args.out)
    for failure in doc["failures"]:
        _progress(f"FAIL {failure}")
    _progress(
        f"{doc['entries_passed']}/{doc['entries_total']} entries, "
        f"{doc['marginals_passed']}/{doc['marginals_total']} marginals pass"
    )
    return EXIT_OK if passed else EXIT_FAIL


def cmd_run(args: argparse.Namespace) -> int:
    config = effective_config(args, RUN_DEFAULTS)
    message = resolve_message(config)
    try:
        protocol = ProtocolConfig(
            n_batch=int(config["n_batch"]),
            message_bits=message,
            check_fraction=float(config["check_fraction"]),
            error_threshold=float(config["error_threshold"]),
            group_size_m=int(config["group_size_m"]),
            seed=int(config["seed"]),
        )
        channel = ChannelModel(ChannelKind(config["kind"]), float(config["rate"]))
    except (ConfigError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    _progress(f"run: n_batch={protocol.n_batch} m={protocol.group_size_m} channel={channel.kind.value}")
    try:
        result = run_protocol(protocol, channel)
    except ErrorEstimationError as exc:
        raise UsageError(f"{exc}; enlarge n_batch or check_fraction") from exc
    row = protocol_row(result)
    row["message_bits"] = len(message)
    header = _header("run", config)
    if args.output_format == "csv":
        text = render_csv(header, config, list(row), [row])
    else:
        text = render_json(header, config, "result", row)
    _emit(text, args.out)
    return EXIT_OK


def _leakage(r: float, m: int, trials: int, seed: int) -> LeakageEstimate:
    try:
        return leakage_monte_carlo(r, m, trials, seed)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def cmd_leakage(args: argparse.Namespace) -> int:
    config = effective_config(args, LEAKAGE_DEFAULTS)
    try:
        r, m, trials, seed = float(config["r"]), int(config["m"]), int(config["trials"]), int(config["seed"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad leakage parameter: {exc}") from exc
    est = _leakage(r, m, trials, seed)
    row = leakage_row(est)
    header = _header("leakage", config)
    if args.output_format == "csv":
        text = render_csv(header, config, SWEEP_HEADER, [row])
    else:
        text = render_json(header, config, "result", row)
    _emit(text, args.out)
    return EXIT_OK


def cell_seed(root: int, index: int) -> int:
    """Seed of sweep cell ``index``, derived from the root seed."""
    state = np.random.SeedSequence(root, spawn_key=(SWEEP_STREAM, index)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def cmd_sweep(args: argparse.Namespace) -> int:
    config = effective_config(args, SWEEP_DEFAULTS)
    try:
        r_list = [float(r) for r in config["r_list"]]
        m_list = [int(m) for m in config["m_list"]]
        trials, root = int(config["trials"]), int(config["seed"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sweep parameter: {exc}") from exc
    if not r_list or not m_list:
        raise UsageError("sweep grid is empty")
    rows = []
    for index, (r, m) in enumerate((r, m) for r in r_list for m in m_list):
        _progress(f"sweep cell {index + 1}/{len(r_list) * len(m_list)}: r={r} m={m}")
        rows.append(leakage_row(_leakage(r, m, trials, cell_seed(root, index))))
    header = _header("sweep", config)
    if args.output_format == "json":
        text = render_json(header, config, "cells", rows)
    else:
        text = render_csv(header, config, SWEEP_HEADER, rows)
    _emit(text, args.out)
    return EXIT_OK


COMMANDS = {
    "verify-tables": cmd_verify_tables,
    "run": cmd_run,
    "leakage": cmd_leakage,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(f"{args.command}: {exc}")
    return EXIT_USAGE  # unreachable, parser.error exits


if __name__ == "__main__":
    sys.exit(main())
