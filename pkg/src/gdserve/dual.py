"""Dual-value allocation planning and online primal reconstruction.

The offline problem relaxes each demand constraint with an underdelivery
variable u_j >= 0:

    minimize  sum_j sum_{i in G(j)} s_i * (x_ij - theta_j)^2 / theta_j
              + sum_j penalty_j * u_j
    s.t.      sum_{i in G(j)} s_i * x_ij + u_j >= d_j        for all j
              sum_{j in G(i)} x_ij <= 1,  x_ij >= 0          for all i

with theta_j = d_j / (total eligible forecast supply of j).  The plan stores
one dual value per contract; at serve time the edge fractions are rebuilt
from the duals of the impression's eligible contracts alone.

Dual scaling note: differentiating the objective above gives
2*s_i*(x_ij - theta_j)/theta_j = lambda_j*s_i - mu_i on positive edges, i.e.
x_ij = theta_j * (1 + lambda_j/2 - mu_i/(2*s_i)).  The reconstruction
function g(z) = max(0, theta_j*(1+z)) therefore pairs with duals expressed
as half the raw multipliers; since the raw demand dual is capped by the
underdelivery price, plan values live in [0, penalty_j/2], and a contract
whose demand is unattainable converges to exactly penalty_j/2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import kernels
from .hwm import ServeDecision
from .model import (AllocationGraph, FractionalAllocation, GraphDataError,
                    validate_graph)


class DualConvergenceError(RuntimeError):
    """Offline solve failed to converge; carries the worst violation."""

    def __init__(self, message: str, worst_contract: str, worst_violation: float):
        super().__init__(message)
        self.worst_contract = worst_contract
        self.worst_violation = worst_violation


@dataclass(frozen=True)
class DualObjectiveSpec:
    """Objective data: target fraction and underdelivery price per contract."""

    theta: Dict[str, float]
    penalty: Dict[str, float]

    def __post_init__(self):
        for cid, p in self.penalty.items():
            if p <= 0:
                raise GraphDataError(f"contract {cid}: penalty must be positive")

    @classmethod
    def from_graph(cls, graph: AllocationGraph) -> "DualObjectiveSpec":
        theta = {}
        penalty = {}
        for c in graph.contracts:
            total = graph.eligible_supply(c.id)
            if total > 0:
                theta[c.id] = c.demand / total
            penalty[c.id] = c.penalty
        return cls(theta, penalty)


@dataclass(frozen=True)
class DualEntry:
    contract_id: str
    theta: float
    alpha: float
    penalty: float


@dataclass
class DualPlan:
    """One dual value per contract, plus its target fraction and price.

    Contracts with zero eligible forecast supply are excluded (their target
    fraction is undefined) and reported in `diagnostics`.
    """

    entries: List[DualEntry]
    diagnostics: List[str] = field(default_factory=list, compare=False)
    _by_id: Dict[str, DualEntry] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._by_id = {e.contract_id: e for e in self.entries}

    def __contains__(self, contract_id: str) -> bool:
        return contract_id in self._by_id

    def entry(self, contract_id: str) -> DualEntry:
        return self._by_id[contract_id]

    def effective_probs(self, contract_ids: Sequence[str]) -> List[Tuple[str, float]]:
        """Serve-time probabilities: the reconstructed edge fractions."""
        ordered = sorted(contract_ids)
        triples = [(cid, self._by_id[cid].theta, self._by_id[cid].alpha)
                   for cid in ordered]
        return reconstruct_primal(triples)


def dual_objective(graph: AllocationGraph, alloc: FractionalAllocation,
                   underdelivery: Dict[str, float],
                   spec: Optional[DualObjectiveSpec] = None,
                   tol: float = 1e-9) -> float:
    """Evaluate the relaxed objective for a feasible (x, u) pair.

    Raises GraphDataError when u_j < 0, an edge fraction is negative, or a
    relaxed demand constraint is violated beyond `tol`.
    """
    spec = spec or DualObjectiveSpec.from_graph(graph)
    for (sid, cid), x in alloc.values.items():
        if x < -tol:
            raise GraphDataError(f"edge ({sid!r}, {cid!r}): negative allocation {x}")
    total = 0.0
    for c in graph.contracts:
        u = underdelivery.get(c.id, 0.0)
        if u < -tol:
            raise GraphDataError(f"contract {c.id}: negative underdelivery {u}")
        delivered = sum(alloc.get(sid, c.id) * graph.node_by_id[sid].forecast_supply
                        for sid in graph.nodes_of[c.id])
        if delivered + u < c.demand - tol * max(1.0, c.demand):
            raise GraphDataError(
                f"contract {c.id}: relaxed demand constraint violated "
                f"({delivered:.6g} + {u:.6g} < {c.demand:.6g})")
        total += spec.penalty[c.id] * u
        if c.id not in spec.theta:
            continue
        th = spec.theta[c.id]
        for sid in graph.nodes_of[c.id]:
            s = graph.node_by_id[sid].forecast_supply
            x = alloc.get(sid, c.id)
            total += s * (x - th) ** 2 / th
    return total


def reconstruct_primal(eligible: Sequence[Tuple[str, float, float]]
                       ) -> List[Tuple[str, float]]:
    """Rebuild edge fractions for one impression from (id, theta, dual) triples.

    Returns [(contract_id, x)] in input order; the values are non-negative
    and sum to at most 1 by construction.  An empty input yields an empty
    result (the impression goes unallocated).
    """
    if not eligible:
        return []
    thetas = [t for _, t, _ in eligible]
    alphas = [a for _, _, a in eligible]
    for cid, t, _ in eligible:
        if t <= 0:
            raise GraphDataError(f"contract {cid}: target fraction must be positive")
    xs = kernels.dual_probs(thetas, alphas)
    return [(cid, x) for (cid, _, _), x in zip(eligible, xs)]


def solve_dual_offline(graph: AllocationGraph,
                       spec: Optional[DualObjectiveSpec] = None,
                       tol: float = 1e-6, max_iters: int = 10000, *,
                       validate: bool = True) -> DualPlan:
    """Compute per-contract dual values by cyclic coordinate ascent.

    For each contract in turn the dual is adjusted by bisection until the
    reconstructed expected delivery over the forecast meets the demand,
    clamped to [0, penalty/2]; sweeps repeat until the largest per-contract
    change falls below `tol`.  On return every contract either delivers at
    least d_j * (1 - tol) in reconstruction or sits at the cap (its
    underdelivery is priced at the penalty); otherwise DualConvergenceError
    is raised with the worst violator.
    """
    if validate:
        violations = validate_graph(graph)
        if violations:
            raise GraphDataError("invalid graph: " + "; ".join(violations))
    spec = spec or DualObjectiveSpec.from_graph(graph)
    diagnostics = []
    included = []
    for c in graph.contracts:
        if c.id in spec.theta:
            included.append(c)
        else:
            diagnostics.append(
                f"contract {c.id}: no eligible forecast supply; excluded from plan")
    included.sort(key=lambda c: c.id)
    theta = spec.theta
    cap = {c.id: spec.penalty[c.id] / 2.0 for c in included}
    alpha = {c.id: 0.0 for c in included}
    included_ids = set(alpha)

    # Per-node eligible lists restricted to planned contracts; per-contract
    # (node, supply, slot) views for delivery evaluation.
    node_lists: Dict[str, List[str]] = {}
    for n in graph.supply_nodes:
        lst = [cid for cid in graph.contracts_of[n.id] if cid in included_ids]
        if lst and n.forecast_supply > 0:
            node_lists[n.id] = lst
    views = {c.id: [] for c in included}
    for nid, lst in node_lists.items():
        s = float(graph.node_by_id[nid].forecast_supply)
        ths = [theta[cid] for cid in lst]
        for slot, cid in enumerate(lst):
            views[cid].append((lst, ths, s, slot))

    def delivery(cid: str, a: float) -> float:
        total = 0.0
        for lst, ths, s, slot in views[cid]:
            als = [a if k == cid else alpha[k] for k in lst]
            total += s * kernels.dual_probs(ths, als)[slot]
        return total

    def worst_violation() -> Tuple[str, float]:
        # Complementarity residual: a contract must either deliver d_j within
        # tol*d_j or sit at the cap (underdelivery priced at the penalty).
        cid_w, rel_w = "", 0.0
        for c in included:
            if alpha[c.id] >= cap[c.id] - tol:
                continue
            short = max(0.0, float(c.demand) - delivery(c.id, alpha[c.id]))
            rel = short / float(c.demand)
            if rel > rel_w:
                cid_w, rel_w = c.id, rel
        return cid_w, rel_w

    converged = False
    for _ in range(max_iters):
        max_change = 0.0
        for c in included:
            cid, d = c.id, float(c.demand)
            hi = cap[cid]
            if delivery(cid, 0.0) >= d:
                new = 0.0
            elif delivery(cid, hi) < d:
                new = hi
            else:
                lo, up = 0.0, hi
                for _ in range(60):
                    mid = 0.5 * (lo + up)
                    if delivery(cid, mid) < d:
                        lo = mid
                    else:
                        up = mid
                new = up
            max_change = max(max_change, abs(new - alpha[cid]) / max(1.0, hi))
            alpha[cid] = new
        if max_change < tol and worst_violation()[1] <= tol:
            converged = True
            break

    if not converged:
        cid_w, rel_w = worst_violation()
        raise DualConvergenceError(
            f"dual solve did not converge within {max_iters} sweeps; "
            f"worst contract {cid_w or 'n/a'} short by {rel_w:.3g} of demand",
            cid_w, rel_w)

    entries = [DualEntry(c.id, theta[c.id], alpha[c.id], spec.penalty[c.id])
               for c in included]
    return DualPlan(entries, diagnostics)


def reconstructed_allocation(graph: AllocationGraph, plan: DualPlan
                             ) -> Tuple[FractionalAllocation, Dict[str, float]]:
    """Edge fractions and underdelivery implied by serving the forecast."""
    values = {}
    delivered = {c.id: 0.0 for c in graph.contracts}
    for node in graph.supply_nodes:
        cids = [cid for cid in graph.contracts_of[node.id] if cid in plan]
        if not cids:
            continue
        for cid, x in plan.effective_probs(cids):
            if x > 0.0:
                values[(node.id, cid)] = x
                delivered[cid] += node.forecast_supply * x
    under = {c.id: max(0.0, float(c.demand) - delivered[c.id])
             for c in graph.contracts}
    return FractionalAllocation(values), under


def serve_dual(plan: DualPlan, eligible_ids: Sequence[str], u: float,
               impression_id: str = "") -> "ServeDecision":
    """Draw a contract for one impression from the reconstructed fractions."""
    probs = plan.effective_probs(eligible_ids)
    idx = kernels.draw_index([p for _, p in probs], u)
    chosen = probs[idx][0] if idx >= 0 else None
    return ServeDecision(impression_id, chosen, probs, u)


def save_dual_plan(plan: DualPlan, path) -> None:
    """Write dual_plan.jsonl: one contract per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in plan.entries:
            fh.write(json.dumps({"contract_id": e.contract_id, "theta": e.theta,
                                 "alpha": e.alpha, "penalty": e.penalty}) + "\n")


def load_dual_plan(path) -> DualPlan:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                entries.append(DualEntry(str(rec["contract_id"]), rec["theta"],
                                         rec["alpha"], rec.get("penalty", 10.0)))
            except (KeyError, ValueError, TypeError) as exc:
                raise GraphDataError(f"{path}:{lineno}: bad plan record: {exc}") from exc
    return DualPlan(entries)
