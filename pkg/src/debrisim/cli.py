"""Command line entry point: ``debrisim run|sweep|filter|codec``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

import yaml

from . import coap
from .energy import CurrentTrace, apply_filter, butterworth_lowpass
from .runner import emit_outputs, simulate
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCOMPLETE = 2


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_override("seed", args.seed)
    if args.no_physics:
        scenario = scenario.with_override("physics.enabled", False)
    result = simulate(scenario)
    report = result.report
    if args.out:
        for path in emit_outputs(result, args.out, physics=not args.no_physics):
            print(path)
    else:
        sys.stdout.write(report.to_json())
    if report.mission_incomplete:
        print(f"mission incomplete (stalled in {report.stall_phase})", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


def _parse_value(text: str):
    return yaml.safe_load(text)


def _cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
    variants = [scenario.with_override(args.param, v) for v in values]

    def one(item):
        value, variant = item
        report = simulate(variant).report
        return {
            "value": value,
            "sync_error_ms": report.sync_error_ms,
            "mission_incomplete": report.mission_incomplete,
            "master_energy_uj": report.energy["master"]["energy_uj"],
            "slave_energy_uj": report.energy["slave"]["energy_uj"],
        }

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(one, zip(values, variants)))
    text = json.dumps({"param": args.param, "results": rows}, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_INCOMPLETE if any(r["mission_incomplete"] for r in rows) else EXIT_OK


def _cmd_filter(args) -> int:
    text = sys.stdin.read() if args.csv == "-" else Path(args.csv).read_text(encoding="utf-8")
    trace = CurrentTrace.from_csv(text, fs_hz=args.fs)
    coeffs = butterworth_lowpass(args.order, args.fc, trace.fs_hz)
    out = apply_filter(coeffs, trace).to_csv()
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return EXIT_OK


def message_to_json(m: coap.CoapMessage) -> dict:
    out = {
        "type": m.mtype.name,
        "code": m.code.name,
        "mid": m.message_id,
        "token": m.token.hex(),
        "options": [[n, v.hex()] for n, v in m.options],
        "payload": m.payload.decode("utf-8", "replace"),
    }
    if m.uri_path:
        out["path"] = m.uri_path
    return out


def message_from_json(d: dict) -> coap.CoapMessage:
    options = [(int(n), bytes.fromhex(v)) for n, v in d.get("options", [])]
    if "path" in d:
        options = [(int(coap.OptionNumber.URI_PATH), s.encode()) for s in d["path"].strip("/").split("/") if s] + [
            o for o in options if o[0] != coap.OptionNumber.URI_PATH
        ]
        options.sort(key=lambda o: o[0])
    return coap.CoapMessage(
        coap.MessageType[d.get("type", "CON")],
        coap.Code[d.get("code", "GET")],
        int(d.get("mid", 0)),
        bytes.fromhex(d.get("token", "")),
        tuple(options),
        d.get("payload", "").encode(),
    )


def _cmd_codec(args) -> int:
    text = args.input if args.input is not None else sys.stdin.read()
    if args.direction == "decode":
        msg = coap.decode_message(coap.parse_hex(text))
        print(json.dumps(message_to_json(msg)))
    else:
        print(coap.to_hex(coap.encode_message(message_from_json(json.loads(text)))))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="debrisim", description="Two-agent debris-push mission simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory for events.jsonl, report.json, trace.csv, trajectory.csv")
    p.add_argument("--no-physics", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a scenario over several values of one parameter")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="dotted key or alias, e.g. clock_offset_slave")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("filter", help="Butterworth low-pass a t_ms,current_ma CSV")
    p.add_argument("csv", help="input CSV path or - for stdin")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--fc", type=float, default=50.0)
    p.add_argument("--fs", type=float, default=None, help="sampling rate; inferred from t_ms if omitted")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("codec", help="encode JSON to CoAP hex or decode hex to JSON")
    p.add_argument("direction", choices=["encode", "decode"])
    p.add_argument("input", nargs="?", help="hex (decode) or JSON (encode); stdin if omitted")
    p.set_defaults(func=_cmd_codec)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ScenarioError, coap.CoapError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
