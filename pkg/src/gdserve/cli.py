"""Command-line interface: plan generation, serving, simulation, metrics.

Subcommands
-----------
plan      build eligibility edges from supply/contract files and write a plan
serve     stream impressions through a plan file, one decision per line
simulate  run an end-to-end delivery simulation from a config + scenario dir
metrics   summarize a delivery timeseries into smoothness/improvement numbers
scenario  generate a synthetic scenario directory

Data files are JSON lines (plans, decisions, supply, contracts, impressions)
except the per-cycle delivery timeseries, which is CSV.  Diagnostics go to
stderr; data goes to files or stdout.  Exit status is 0 iff no errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import dual as dual_mod
from . import hwm as hwm_mod
from . import metrics as mx
from . import model
from . import scenario as scenario_mod
from . import simulate as sim
from . import targeting as tg


def _seed_from(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("GD_SEED")
    return int(env) if env else 0


def _load_graph(supply_path, contracts_path, edges_path=None) -> model.AllocationGraph:
    supply = model.load_supply(supply_path)
    contracts = model.load_contracts(contracts_path)
    if edges_path:
        graph = model.AllocationGraph(supply, contracts, model.load_edges(edges_path))
        violations = model.validate_graph(graph)
        if violations:
            raise model.GraphDataError(
                "edge override is inconsistent with targeting: "
                + "; ".join(violations[:5]))
        return graph
    return model.build_graph(supply, contracts)


def cmd_plan(args) -> int:
    graph = _load_graph(args.supply, args.contracts, args.edges)
    if args.algorithm == "hwm":
        plan = hwm_mod.generate_hwm_plan(graph)
        hwm_mod.save_hwm_plan(plan, args.out)
    else:
        plan = dual_mod.solve_dual_offline(graph)
        dual_mod.save_dual_plan(plan, args.out)
    for line in plan.diagnostics:
        print(f"note: {line}", file=sys.stderr)
    print(f"wrote {len(plan.entries)} plan entries to {args.out}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    contracts = {c.id: c for c in model.load_contracts(args.contracts)}
    with open(args.plan, "r", encoding="utf-8") as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line
                break
    if not first:
        plan = hwm_mod.HwmPlan([])
        plan_ids: List[str] = []
    elif "theta" in json.loads(first):
        plan = dual_mod.load_dual_plan(args.plan)
        plan_ids = [e.contract_id for e in plan.entries]
    else:
        plan = hwm_mod.load_hwm_plan(args.plan)
        plan_ids = [e.contract_id for e in plan.entries]
    for cid in plan_ids:
        if cid not in contracts:
            raise model.GraphDataError(
                f"plan contract {cid!r} is missing from {args.contracts}")
    seed = _seed_from(args)
    eligible_cache: Dict[Tuple[Tuple[str, str], ...], List[str]] = {}
    plan_contracts = [contracts[cid] for cid in plan_ids]
    written = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for index, ev in enumerate(sim.iter_impressions(args.impressions)):
            key = tuple(sorted(ev.attributes.items()))
            hit = eligible_cache.get(key)
            if hit is None:
                hit = [c.id for c in plan_contracts
                       if tg.eligible(ev.attributes, c.targeting)]
                eligible_cache[key] = hit
            cands = [cid for cid in hit if contracts[cid].in_flight(ev.ts)]
            u = sim._impression_uniform(seed, index)
            if isinstance(plan, hwm_mod.HwmPlan):
                decision = hwm_mod.serve_hwm(plan, cands, u, ev.id)
            else:
                decision = dual_mod.serve_dual(plan, cands, u, ev.id)
            out.write(json.dumps({
                "impression_id": decision.impression_id,
                "chosen": decision.chosen,
                "probs": [[cid, p] for cid, p in decision.probabilities],
                "u": decision.rng_trace,
            }) + "\n")
            written += 1
    print(f"wrote {written} decisions to {args.out}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    cfg = sim.load_config(args.config)
    if args.mode:
        cfg.mode = args.mode
    if args.seed is not None:
        cfg.seed = args.seed
    scen = Path(args.scenario)
    graph = _load_graph(scen / "supply.jsonl", scen / "contracts.jsonl")
    impressions = sim.load_impressions(scen / "impressions.jsonl")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = sim.run_simulation(graph, impressions, cfg)
    if args.baseline or cfg.baseline_comparator:
        base = sim.baseline_pacing(graph, impressions, cfg)
        try:
            report.delivery_improvement = mx.delivery_improvement(
                report.booked_by_id(), report.delivered_by_id(),
                base.booked_by_id(), base.delivered_by_id())
        except mx.MetricsError as exc:
            print(f"note: {exc}", file=sys.stderr)
        sim.write_report(base, out / "baseline_report.json",
                         out / "baseline_delivery_timeseries.csv")
    sim.write_report(report, out / "report.json", out / "delivery_timeseries.csv")
    print(f"simulated {report.impressions_in_window} impressions over "
          f"{len(report.cycle_bounds) - 1} cycles; total underdelivery "
          f"{100 * report.total_underdelivery_frac:.2f}%", file=sys.stderr)
    return 0


def _read_timeseries(path) -> List[mx.TimeseriesRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = ["cycle_end_ts", "contract_id", "delivered_cum", "linear_goal"]
        if header != expected:
            raise model.GraphDataError(f"{path}: unexpected timeseries header {header}")
        for lineno, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise model.GraphDataError(f"{path}:{lineno}: bad row")
            rows.append(mx.TimeseriesRow(model.parse_ts(parts[0]), parts[1],
                                         float(parts[2]), float(parts[3])))
    return rows


def _final_delivery(rows: List[mx.TimeseriesRow]) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for row in rows:
        out[row.contract_id] = row.delivered
    return out


def cmd_metrics(args) -> int:
    contracts = {c.id: c for c in model.load_contracts(args.contracts)}
    rows = _read_timeseries(args.timeseries)
    booked = {cid: float(c.booked_demand) for cid, c in contracts.items()}
    sim_end = max(r.t for r in rows)
    finished = {cid for cid, c in contracts.items() if c.end <= sim_end}
    fin_rows = [r for r in rows if r.contract_id in finished]
    unfin_rows = [r for r in rows if r.contract_id not in finished]
    result: Dict[str, Optional[float]] = {
        "sigma75_finished": None, "sigma95_finished": None,
        "sigma75_unfinished": None, "delivery_improvement": None}
    if fin_rows:
        series = mx.build_smoothness(fin_rows, booked)
        result["sigma75_finished"] = mx.smoothness_quantile(
            series, 75, positive_part=args.positive_part)
        result["sigma95_finished"] = mx.smoothness_quantile(
            series, 95, positive_part=args.positive_part)
    if unfin_rows:
        series = mx.build_smoothness(unfin_rows, booked)
        result["sigma75_unfinished"] = mx.smoothness_quantile(
            series, 75, positive_part=args.positive_part)
    if args.baseline:
        base_rows = _read_timeseries(args.baseline)
        result["delivery_improvement"] = mx.delivery_improvement(
            booked, _final_delivery(rows), booked, _final_delivery(base_rows))
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_scenario(args) -> int:
    mix = None
    if args.flight_mix:
        mix = {}
        for part in args.flight_mix.split(","):
            name, _, weight = part.partition("=")
            mix[name.strip()] = float(weight)
    spec = scenario_mod.ScenarioSpec(
        num_contracts=args.contracts, num_attributes=args.attributes,
        contention=args.contention, seed=_seed_from(args), days=args.days,
        daily_traffic=args.daily_traffic, flight_mix=mix)
    graph, stream = scenario_mod.generate_scenario(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.save_supply(graph.supply_nodes, out / "supply.jsonl")
    model.save_contracts(graph.contracts, out / "contracts.jsonl")
    sim.save_impressions(stream, out / "impressions.jsonl")
    print(f"wrote scenario with {len(graph.supply_nodes)} supply nodes, "
          f"{len(graph.contracts)} contracts, {len(stream)} impressions to {out}",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdserve",
        description="Compact allocation plans for guaranteed-delivery serving")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="generate an allocation plan")
    p.add_argument("--supply", required=True)
    p.add_argument("--contracts", required=True)
    p.add_argument("--edges", help="optional explicit edge override (edges.jsonl)")
    p.add_argument("--algorithm", choices=["hwm", "dual"], default="hwm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("serve", help="serve an impression stream from a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--contracts", required=True)
    p.add_argument("--impressions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run an end-to-end delivery simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--scenario", required=True,
                   help="directory with supply.jsonl, contracts.jsonl, impressions.jsonl")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", choices=["expected", "sampled"])
    p.add_argument("--seed", type=int)
    p.add_argument("--baseline", action="store_true",
                   help="also run the reactive comparator and report improvement")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="summarize a delivery timeseries")
    p.add_argument("--timeseries", required=True)
    p.add_argument("--contracts", required=True)
    p.add_argument("--baseline", help="baseline timeseries for improvement")
    p.add_argument("--positive-part", action="store_true",
                   help="score over-delivery only")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("scenario", help="generate a synthetic scenario directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--contracts", type=int, default=12)
    p.add_argument("--attributes", type=int, default=3)
    p.add_argument("--contention", choices=["low", "medium", "high"], default="medium")
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--daily-traffic", type=int, default=8000)
    p.add_argument("--flight-mix", help="e.g. day=0.2,multi_day=0.4,week=0.4")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (model.GraphDataError, tg.TargetingSyntaxError, sim.SimulationError,
            mx.MetricsError, dual_mod.DualConvergenceError, OSError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
