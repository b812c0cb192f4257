"""End-to-end delivery simulation with periodic re-optimization.

The engine streams timestamped impressions through a serving plan that is
regenerated at fixed cycle boundaries.  At each boundary the remaining
demand of every contract is restated from actual delivery (optionally passed
through the feedback adjustment), the remaining-flight supply forecast is
restated as the true remaining per-node supply times a configurable error
multiplier, and the chosen planner runs again.  Between boundaries serving
is stateless: each impression's decision depends only on the current plan
and the impression itself.

Two serving modes are supported.  In "sampled" mode every impression draws a
contract from its effective probabilities (one uniform per impression,
derived from the seed and the impression's stream position, so runs are
reproducible).  In "expected" mode the fractional probabilities themselves
are accumulated, which removes all randomness and lets tests reproduce
analytic delivery numbers exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from random import Random
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import metrics as mx
from . import targeting as tg
from .dual import solve_dual_offline
from .feedback import DeliveryState, FeedbackConfig, apply_feedback, linear_goal
from .hwm import generate_hwm_plan
from .kernels import draw_index, effective_probs
from .model import AllocationGraph, Contract, GraphDataError, parse_ts, replan_contract


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class ImpressionEvent:
    """One user visit: opaque id, timestamp, attribute map."""

    id: str
    ts: datetime
    attributes: Dict[str, str]


@dataclass
class SimulationConfig:
    algorithm: str = "hwm"                    # "hwm" | "dual"
    feedback: Optional[FeedbackConfig] = None
    reopt_period_hours: float = 24.0
    forecast_error_multiplier: float = 1.0
    per_node_error: Optional[Dict[str, float]] = None
    seed: int = 0
    mode: str = "expected"                    # "expected" | "sampled"
    shards: int = 1
    sim_start: Optional[datetime] = None
    sim_end: Optional[datetime] = None
    baseline_comparator: bool = False
    dual_tol: float = 1e-6
    dual_max_iters: int = 10000

    def __post_init__(self):
        if self.reopt_period_hours <= 0:
            raise SimulationError("reopt_period_hours must be positive")
        if self.forecast_error_multiplier <= 0:
            raise SimulationError("forecast error multiplier must be positive")
        for nid, m in (self.per_node_error or {}).items():
            if m <= 0:
                raise SimulationError(f"node {nid}: error multiplier must be positive")
        if self.algorithm not in ("hwm", "dual"):
            raise SimulationError(f"unknown algorithm {self.algorithm!r}")
        if self.mode not in ("expected", "sampled"):
            raise SimulationError(f"unknown mode {self.mode!r}")
        if self.shards < 1:
            raise SimulationError("shards must be at least 1")
        if self.mode == "sampled" and self.shards != 1:
            raise SimulationError("sampled mode runs a single worker")


@dataclass
class ContractOutcome:
    contract_id: str
    booked: float
    delivered: float
    finished: bool

    @property
    def underdelivery_frac(self) -> float:
        return max(0.0, self.booked - self.delivered) / self.booked


@dataclass
class SimulationReport:
    algorithm: str
    mode: str
    cycle_bounds: List[datetime]
    outcomes: List[ContractOutcome]
    timeseries: List[mx.TimeseriesRow]
    rates: Dict[str, List[Optional[float]]]
    impressions_in_window: int
    impressions_skipped: int
    unallocated: float
    total_underdelivery_frac: float
    smoothness: Dict[str, Optional[float]]
    delivery_improvement: Optional[float] = None

    def booked_by_id(self) -> Dict[str, float]:
        return {o.contract_id: o.booked for o in self.outcomes}

    def delivered_by_id(self) -> Dict[str, float]:
        return {o.contract_id: o.delivered for o in self.outcomes}


# ---------------------------------------------------------------------------
# Analytic re-optimization drift: terminal delivery error and its bound
# ---------------------------------------------------------------------------

def terminal_delivery_error(r: float, k: int) -> float:
    """Exact terminal delivery error after k re-optimization cycles.

    `r` is the supply forecast error rate (1 minus the ratio of real to
    predicted supply, r < 1).  With uniform supply, per-cycle replanning and
    rates below saturation, the undelivered fraction of demand after the
    final cycle is (r/k) * prod_{i=1..k-1} (1 + r/i): positive values are
    underdelivery, negative values overdelivery.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if r >= 1:
        raise ValueError("error rate must be below 1")
    value = r / k
    for i in range(1, k):
        value *= 1.0 + r / i
    return value


def terminal_delivery_error_bound(r: float, k: int) -> float:
    """Closed-form upper bound on |terminal_delivery_error|.

    (r + r^2) / k^(1-r) for r > 0 (underdelivery side) and
    |r| / k^(1-r) for r < 0 (overdelivery side); 0 when r = 0.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if r >= 1:
        raise ValueError("error rate must be below 1")
    if r == 0:
        return 0.0
    if r > 0:
        return (r + r * r) / k ** (1.0 - r)
    return abs(r) / k ** (1.0 - r)


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

def _impression_uniform(seed: int, index: int) -> float:
    # Counter-style draw: one independently seeded generator per impression,
    # so decisions do not depend on how the stream is processed or split.
    return Random((seed + 1) * 1_000_003 + index).random()


def _attrs_key(attrs: Dict[str, str]) -> Tuple[Tuple[str, str], ...]:
    return tuple(sorted(attrs.items()))


@dataclass
class _ReplanContext:
    cycle_start: datetime
    cycle_hours: float
    delivered: Dict[str, float]
    prev_cycle_traffic: Dict[str, float]   # eligible events/hour, previous cycle
    cycle_traffic: Dict[str, float]        # eligible events/hour, this cycle


class _HwmController:
    name = "hwm"

    def __init__(self, cfg: SimulationConfig):
        pass

    def replan(self, planning_graph: AllocationGraph, ctx: _ReplanContext):
        plan = generate_hwm_plan(planning_graph, validate=False)
        rates = {e.contract_id: e.alpha for e in plan.entries}
        return plan, rates


class _DualController:
    name = "dual"

    def __init__(self, cfg: SimulationConfig):
        self.tol = cfg.dual_tol
        self.max_iters = cfg.dual_max_iters

    def replan(self, planning_graph: AllocationGraph, ctx: _ReplanContext):
        plan = solve_dual_offline(planning_graph, tol=self.tol,
                                  max_iters=self.max_iters, validate=False)
        rates = {e.contract_id: e.alpha for e in plan.entries}
        return plan, rates


class _RatePlan:
    """Serving view of the reactive controller: per-contract rates truncated
    in a fixed priority order (soonest flight end first)."""

    def __init__(self, rates: Dict[str, float], order: Dict[str, int]):
        self.rates = rates
        self._pos = order

    def __contains__(self, contract_id: str) -> bool:
        return contract_id in self.rates

    def effective_probs(self, contract_ids: Sequence[str]) -> List[Tuple[str, float]]:
        ordered = sorted(contract_ids, key=self._pos.__getitem__)
        effs = effective_probs([self.rates[cid] for cid in ordered])
        return list(zip(ordered, effs))


_BASE_GAIN = 4.0


class _BaseController:
    """Forecast-free reactive pacer: rates start at demand over estimated
    eligible traffic and are rescaled each cycle in proportion to the gap
    from the linear goal."""

    name = "base"

    def __init__(self, cfg: SimulationConfig):
        self.rates: Dict[str, float] = {}

    def replan(self, planning_graph: AllocationGraph, ctx: _ReplanContext):
        order = {c.id: pos for pos, c in enumerate(
            sorted(planning_graph.contracts, key=lambda c: (c.end, c.id)))}
        rates = {}
        for c in planning_graph.contracts:
            if c.id not in self.rates:
                traffic = ctx.prev_cycle_traffic.get(c.id) or ctx.cycle_traffic.get(c.id, 0.0)
                if traffic <= 0.0:
                    rate = 1.0
                else:
                    rate = min(1.0, c.booked_demand / (c.flight_hours * traffic))
            else:
                rate = self.rates[c.id]
                gap = ((linear_goal(c, ctx.cycle_start) - ctx.delivered[c.id])
                       / c.booked_demand)
                rate *= 1.0 + _BASE_GAIN * gap
                if gap > 0.0:
                    rate = max(rate, 1e-3)
                rate = min(max(rate, 0.0), 1.0)
            self.rates[c.id] = rate
            rates[c.id] = rate
        return _RatePlan(dict(rates), order), rates


def run_simulation(graph: AllocationGraph, impressions: Sequence[ImpressionEvent],
                   cfg: SimulationConfig) -> SimulationReport:
    """Simulate serving `impressions` against `graph` under `cfg`."""
    controller = {"hwm": _HwmController, "dual": _DualController}[cfg.algorithm](cfg)
    return _run_engine(graph, impressions, cfg, controller)


def baseline_pacing(graph: AllocationGraph, impressions: Sequence[ImpressionEvent],
                    cfg: SimulationConfig) -> SimulationReport:
    """Simulate the reactive comparator (no forecast; pure pacing feedback)."""
    return _run_engine(graph, impressions, cfg, _BaseController(cfg))


def _run_engine(graph: AllocationGraph, impressions: Sequence[ImpressionEvent],
                cfg: SimulationConfig, controller) -> SimulationReport:
    if not graph.contracts:
        raise SimulationError("no contracts to simulate")
    sim_start = cfg.sim_start or min(c.start for c in graph.contracts)
    sim_end = cfg.sim_end or max(c.end for c in graph.contracts)
    if sim_start >= sim_end:
        raise SimulationError("simulation window is empty")
    period = timedelta(hours=cfg.reopt_period_hours)
    bounds = [sim_start]
    while bounds[-1] < sim_end:
        bounds.append(min(bounds[-1] + period, sim_end))
    n_cycles = len(bounds) - 1
    cycle_hours = cfg.reopt_period_hours

    # Bucket impressions by cycle and match them to supply nodes.
    node_of_key = {_attrs_key(dict(n.attributes)): n.id for n in graph.supply_nodes}
    buckets: List[List[Tuple[int, ImpressionEvent, Optional[str]]]] = \
        [[] for _ in range(n_cycles)]
    node_counts = {n.id: [0] * n_cycles for n in graph.supply_nodes}
    skipped = 0
    prev_ts = None
    for idx, ev in enumerate(impressions):
        if prev_ts is not None and ev.ts < prev_ts:
            raise SimulationError(
                f"impression {ev.id} at {ev.ts.isoformat()} is out of order")
        prev_ts = ev.ts
        if not (sim_start <= ev.ts < sim_end):
            skipped += 1
            continue
        k = min((ev.ts - sim_start) // period, n_cycles - 1)
        nid = node_of_key.get(_attrs_key(ev.attributes))
        buckets[k].append((idx, ev, nid))
        if nid is not None:
            node_counts[nid][k] += 1

    # Suffix sums: true remaining supply per node at each cycle start.
    remaining_actual = {nid: [0.0] * (n_cycles + 1) for nid in node_counts}
    for nid, counts in node_counts.items():
        acc = 0.0
        for k in range(n_cycles - 1, -1, -1):
            acc += counts[k]
            remaining_actual[nid][k] = acc

    def node_multiplier(nid: str) -> float:
        if cfg.per_node_error and nid in cfg.per_node_error:
            return cfg.per_node_error[nid]
        return cfg.forecast_error_multiplier

    delivered: Dict[str, float] = {c.id: 0.0 for c in graph.contracts}
    boost: Dict[str, bool] = {c.id: False for c in graph.contracts}
    rates_trace: Dict[str, List[Optional[float]]] = {c.id: [] for c in graph.contracts}
    timeseries: List[mx.TimeseriesRow] = []
    served = 0
    sampled = cfg.mode == "sampled"

    def eligible_traffic(k: int) -> Dict[str, float]:
        # Eligible on-graph events per hour for each contract during cycle k.
        if k < 0 or k >= n_cycles:
            return {}
        hours = (bounds[k + 1] - bounds[k]).total_seconds() / 3600.0
        if hours <= 0:
            return {}
        out = {}
        for c in graph.contracts:
            total = sum(node_counts[nid][k] for nid in graph.nodes_of[c.id])
            out[c.id] = total / hours
        return out

    for k in range(n_cycles):
        cycle_start = bounds[k]
        cycle_end = bounds[k + 1]

        # Restate demand (actual delivery, optionally feedback-adjusted).
        planning: List[Contract] = []
        for c in graph.contracts:
            remaining = c.booked_demand - delivered[c.id]
            if remaining <= 0 or c.end <= cycle_start:
                continue
            reported = remaining
            if cfg.feedback is not None:
                state = DeliveryState(delivered[c.id], linear_goal(c, cycle_start),
                                      remaining, boost[c.id])
                reported, boost[c.id] = apply_feedback(
                    state, c, cycle_start, cfg.feedback, cycle_hours)
            planning.append(replan_contract(c, reported))
        plan = None
        if planning:
            planning_ids = {c.id for c in planning}
            # Restate the remaining-flight forecast: true remaining supply
            # distorted by the configured error multiplier.
            nodes = [replace(n, forecast_supply=remaining_actual[n.id][k]
                             * node_multiplier(n.id))
                     for n in graph.supply_nodes]
            edges = [(sid, cid) for sid, cid in graph.edges if cid in planning_ids]
            planning_graph = AllocationGraph(nodes, planning, edges)
            ctx = _ReplanContext(cycle_start, cycle_hours, dict(delivered),
                                 eligible_traffic(k - 1), eligible_traffic(k))
            plan, cycle_rates = controller.replan(planning_graph, ctx)
        else:
            cycle_rates = {}
        for c in graph.contracts:
            rates_trace[c.id].append(cycle_rates.get(c.id))

        # Serve this cycle's impressions.
        if plan is not None and buckets[k]:
            eligible_cache: Dict[Tuple, List[str]] = {}
            probs_cache: Dict[Tuple[str, ...], List[Tuple[str, float]]] = {}
            plan_contracts = [graph.contract_by_id[c.id] for c in planning]

            def eligible_ids(ev: ImpressionEvent) -> List[str]:
                key = _attrs_key(ev.attributes)
                hit = eligible_cache.get(key)
                if hit is None:
                    # Plan membership matters: the dual planner drops contracts
                    # with no eligible forecast supply.
                    hit = [c.id for c in plan_contracts
                           if c.id in plan and tg.eligible(ev.attributes, c.targeting)]
                    eligible_cache[key] = hit
                return [cid for cid in hit
                        if graph.contract_by_id[cid].in_flight(ev.ts)]

            def probs_for(cands: List[str]) -> List[Tuple[str, float]]:
                ckey = tuple(cands)
                probs = probs_cache.get(ckey)
                if probs is None:
                    probs = plan.effective_probs(cands)
                    probs_cache[ckey] = probs
                return probs

            if sampled:
                for idx, ev, _nid in buckets[k]:
                    served += 1
                    cands = [cid for cid in eligible_ids(ev)
                             if delivered[cid] < graph.contract_by_id[cid].booked_demand]
                    if not cands:
                        continue
                    probs = probs_for(cands)
                    u = _impression_uniform(cfg.seed, idx)
                    sel = draw_index([p for _, p in probs], u)
                    if sel >= 0:
                        delivered[probs[sel][0]] += 1.0
            else:
                # Sharded expected-value pass: contiguous blocks, contributions
                # concatenated in stream order, exact summation at the merge.
                contribs: Dict[str, List[float]] = {c.id: [] for c in planning}
                block = max(1, math.ceil(len(buckets[k]) / cfg.shards))
                for b in range(0, len(buckets[k]), block):
                    for idx, ev, _nid in buckets[k][b:b + block]:
                        served += 1
                        cands = eligible_ids(ev)
                        if not cands:
                            continue
                        for cid, p in probs_for(cands):
                            if p > 0.0:
                                contribs[cid].append(p)
                for c in planning:
                    inc = math.fsum(contribs[c.id])
                    booked = graph.contract_by_id[c.id].booked_demand
                    delivered[c.id] = min(booked, delivered[c.id] + inc)
        elif buckets[k]:
            served += len(buckets[k])

        for c in graph.contracts:
            if c.start <= cycle_end <= c.end:
                timeseries.append(mx.TimeseriesRow(
                    cycle_end, c.id, delivered[c.id], linear_goal(c, cycle_end)))

    outcomes = [ContractOutcome(c.id, float(c.booked_demand), delivered[c.id],
                                c.end <= sim_end)
                for c in graph.contracts]
    unallocated = served - math.fsum(delivered.values())
    booked_total = sum(o.booked for o in outcomes)
    total_under = sum(max(0.0, o.booked - o.delivered) for o in outcomes) / booked_total
    smooth = _smoothness_summary(timeseries, graph, sim_end)
    return SimulationReport(
        algorithm=controller.name, mode=cfg.mode, cycle_bounds=bounds,
        outcomes=outcomes, timeseries=timeseries, rates=rates_trace,
        impressions_in_window=served, impressions_skipped=skipped,
        unallocated=unallocated, total_underdelivery_frac=total_under,
        smoothness=smooth)


def _smoothness_summary(timeseries: List[mx.TimeseriesRow],
                        graph: AllocationGraph,
                        sim_end: datetime) -> Dict[str, Optional[float]]:
    booked = {c.id: float(c.booked_demand) for c in graph.contracts}
    finished = {c.id for c in graph.contracts if c.end <= sim_end}
    out: Dict[str, Optional[float]] = {"sigma75_finished": None,
                                       "sigma95_finished": None,
                                       "sigma75_unfinished": None}
    fin_rows = [r for r in timeseries if r.contract_id in finished]
    unfin_rows = [r for r in timeseries if r.contract_id not in finished]
    if fin_rows:
        series = mx.build_smoothness(fin_rows, booked)
        out["sigma75_finished"] = mx.smoothness_quantile(series, 75)
        out["sigma95_finished"] = mx.smoothness_quantile(series, 95)
    if unfin_rows:
        series = mx.build_smoothness(unfin_rows, booked)
        out["sigma75_unfinished"] = mx.smoothness_quantile(series, 75)
    return out


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def load_impressions(path) -> List[ImpressionEvent]:
    """Read impressions.jsonl: {"id", "ts", "attributes"} per line."""
    return list(iter_impressions(path))


def iter_impressions(path) -> Iterable[ImpressionEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                yield ImpressionEvent(str(rec["id"]), parse_ts(rec["ts"]),
                                      dict(rec.get("attributes", {})))
            except (KeyError, ValueError, TypeError) as exc:
                raise GraphDataError(f"{path}:{lineno}: bad impression: {exc}") from exc


def save_impressions(events: Sequence[ImpressionEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps({"id": ev.id, "ts": ev.ts.isoformat(),
                                 "attributes": ev.attributes}) + "\n")


def load_config(path) -> SimulationConfig:
    """Read the simulate config JSON (see SimulationConfig for fields)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    fb = raw.get("feedback")
    feedback = None
    if fb:
        feedback = FeedbackConfig(
            delta_hours=fb.get("delta_hours", 4.0),
            boost_behind=fb.get("boost_behind", 1.5),
            damp_ahead=fb.get("damp_ahead", 10.0),
            release_within_cycles=fb.get("release_within_cycles", 2.0))
    kwargs = dict(
        algorithm=raw.get("algorithm", "hwm"),
        feedback=feedback,
        reopt_period_hours=raw.get("reopt_period_hours", 24.0),
        forecast_error_multiplier=raw.get("forecast_error_multiplier", 1.0),
        per_node_error=raw.get("forecast_error_per_node"),
        seed=raw.get("seed", 0),
        mode=raw.get("mode", "expected"),
        shards=raw.get("shards", 1),
        baseline_comparator=bool(raw.get("baseline_comparator", False)))
    if raw.get("sim_start"):
        kwargs["sim_start"] = parse_ts(raw["sim_start"])
    if raw.get("sim_end"):
        kwargs["sim_end"] = parse_ts(raw["sim_end"])
    return SimulationConfig(**kwargs)


def write_report(report: SimulationReport, report_path, timeseries_path) -> None:
    """Emit report.json and the per-cycle delivery_timeseries.csv."""
    doc = {
        "algorithm": report.algorithm,
        "mode": report.mode,
        "cycles": [b.isoformat() for b in report.cycle_bounds],
        "contracts": [
            {"id": o.contract_id, "booked": o.booked, "delivered": o.delivered,
             "underdelivery_frac": o.underdelivery_frac, "finished": o.finished}
            for o in report.outcomes],
        "total_underdelivery_frac": report.total_underdelivery_frac,
        "impressions_in_window": report.impressions_in_window,
        "impressions_skipped": report.impressions_skipped,
        "unallocated": report.unallocated,
        "smoothness": report.smoothness,
        "delivery_improvement": report.delivery_improvement,
        "rates": report.rates,
    }
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(timeseries_path, "w", encoding="utf-8") as fh:
        fh.write("cycle_end_ts,contract_id,delivered_cum,linear_goal\n")
        for row in report.timeseries:
            fh.write(f"{row.t.isoformat()},{row.contract_id},"
                     f"{row.delivered!r},{row.linear_goal!r}\n")
