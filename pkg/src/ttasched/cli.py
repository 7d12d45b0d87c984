"""Command-line front end.

Subcommands mirror the pipeline stages: ``assess`` scores layer drift,
``predict`` calibrates an offline profile to a resource state, ``schedule``
picks the update strategy, ``simulate`` runs a scenario end to end, and
``oracle-check`` certifies the scheduler against exhaustive enumeration.

Exit codes: 0 success, 1 failed check, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import InputError
from .importance import (
    embed,
    layer_importance,
    load_stats_file,
)
from .latency import (
    build_profile,
    load_device_file,
    load_offline_profile_file,
    load_trace_file,
    profile_from_document,
    profile_to_document,
)
from .network import load_network_file
from .pipeline import load_scenario_file, report_csv, report_json, run_episode
from .scheduler import (
    SchedulerConfig,
    brute_force,
    certify,
    load_importance_file,
    solve_dp,
)


def _write_out(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _dump_json(document: dict, out: str) -> None:
    _write_out(json.dumps(document, indent=2, sort_keys=True) + "\n", out)


def cmd_assess(args) -> int:
    history_stats = load_stats_file(args.history)
    current_stats = load_stats_file(args.current)
    if len(history_stats) != len(current_stats):
        first = min(len(history_stats), len(current_stats))
        raise InputError(
            f"layer {first}: present in one stats file but not the other "
            f"({len(history_stats)} history vs {len(current_stats)} current layers)"
        )
    network = load_network_file(args.network, args.lenient) if args.network else None
    n = len(current_stats)
    if network is not None and network.n_layers != n:
        raise InputError(
            f"network has {network.n_layers} layers, stats cover {n}"
        )
    a = [0.0] * (n + 1)
    for layer_id in range(n):
        h = embed(history_stats[layer_id])
        e = embed(current_stats[layer_id])
        if h.channels != e.channels:
            raise InputError(
                f"layer {layer_id}: history has {h.channels} channels, "
                f"current has {e.channels}"
            )
        b = n - layer_id
        if network is not None and not network.layers[layer_id].has_params:
            continue
        a[b] = layer_importance(h, e, mode=args.kl_mode)
    _dump_json({"a": a[1:]}, args.out)
    return 0


def cmd_predict(args) -> int:
    network = load_network_file(args.network, args.lenient)
    offline = load_offline_profile_file(args.offline_profile, network.n_layers)
    device = load_device_file(args.device)
    trace = load_trace_file(args.state_trace)
    state = trace.state_at(args.at_ms)
    profile = build_profile(network, offline, device, state)
    _dump_json(profile_to_document(network, profile), args.out)
    return 0


def cmd_schedule(args) -> int:
    importance = load_importance_file(args.importance)
    with open(args.profile) as fh:
        try:
            profile_doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.profile}: invalid JSON ({exc})") from None
    profile = profile_from_document(profile_doc)
    config = SchedulerConfig(sigma=args.sigma, resolution=args.resolution)
    result = solve_dp(importance, profile, config)
    if result.budget_clipped:
        print(
            "warning: budget is zero at this acceleration factor; "
            "only the empty strategy fits",
            file=sys.stderr,
        )
    if args.oracle:
        if profile.n_layers > 20:
            raise InputError("--oracle supports at most 20 layers")
        oracle = brute_force(importance, profile, result.budget_ms)
        match = (
            oracle.strategy.selected == result.strategy.selected
            and oracle.achieved_importance == result.achieved_importance
        )
        print("MATCH" if match else "MISMATCH", file=sys.stderr)
        if not match:
            print(
                json.dumps({"dp": result.to_document(), "oracle": oracle.to_document()}),
                file=sys.stderr,
            )
            return 1
    _dump_json(result.to_document(), args.out)
    return 0


def cmd_simulate(args) -> int:
    import dataclasses

    scenario = load_scenario_file(args.scenario)
    overrides = {}
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        scenario = dataclasses.replace(scenario, **overrides)
    report = run_episode(scenario)
    _write_out(report_json(report), args.out)
    if args.csv:
        _write_out(report_csv(report), args.csv)
    return 0


def cmd_oracle_check(args) -> int:
    if args.instances < 1:
        raise InputError("--instances must be >= 1")
    report = certify(instances=args.instances, max_n=args.max_n, seed=args.seed)
    print(
        f"{report.matches}/{report.instances} match "
        f"({report.elapsed_s:.2f}s wall)"
    )
    if not report.all_match:
        for failure in report.failures:
            print(json.dumps(failure, sort_keys=True), file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttasched",
        description="Sparse layer-update scheduling and pipeline simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assess", help="score per-layer drift between two stats files")
    p.add_argument("--history", required=True, help="JSON-lines stats of the tracked history")
    p.add_argument("--current", required=True, help="JSON-lines stats of the current batch")
    p.add_argument("--network", help="optional network file; zeroes parameter-free layers")
    p.add_argument("--kl-mode", choices=("gaussian", "elementwise"), default="gaussian")
    p.add_argument("--lenient", action="store_true", help="ignore unknown input fields")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("predict", help="calibrate an offline profile to a resource state")
    p.add_argument("--network", required=True)
    p.add_argument("--offline-profile", required=True)
    p.add_argument("--device", required=True)
    p.add_argument("--state-trace", required=True)
    p.add_argument("--at-ms", type=float, default=0.0, help="trace instant to sample")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("schedule", help="pick the update strategy for a budget")
    p.add_argument("--importance", required=True, help="importance file from assess")
    p.add_argument("--profile", required=True, help="runtime profile from predict")
    p.add_argument("--sigma", type=float, default=0.33, help="acceleration factor")
    p.add_argument("--resolution", type=int, default=500, help="budget grid units")
    p.add_argument("--oracle", action="store_true", help="cross-check against enumeration")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("simulate", help="run a scenario episode end to end")
    p.add_argument("scenario")
    p.add_argument("--out", default="-", help="report JSON path, - for stdout")
    p.add_argument("--csv", help="optional flat per-batch CSV path")
    p.add_argument("--alpha", type=float, help="override the scenario's history rate")
    p.add_argument("--seed", type=int, help="override the scenario's seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle-check", help="certify the scheduler on random instances")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--max-n", type=int, default=14)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
