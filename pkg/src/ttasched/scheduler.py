"""Budget-constrained sparse update selection.

Solves: maximize the summed importance of the selected layers subject to the
strategy's backward-plus-reforward latency staying within the budget
``sigma * T - T_f``. The search walks layers in backward order and chains
incremental costs: selecting layer ``l`` after nearest-selection ``l_k``
adds ``l``'s weight-gradient time, the activation-gradient chain between
them, and the reforward span they newly expose.

The dynamic program keeps, per deepest-selected layer, a cost/importance
Pareto staircase of partial chains with their exact real-valued costs, so a
feasible optimum is never lost to grid rounding: a chain is discarded only
when another chain over the same deepest layer is at least as good on both
axes, and such a chain extends everywhere the discarded one could. Costs are
discretized (rounding up, so the real constraint can never be violated) only
for the diagnostic table view and for reporting. An exhaustive enumeration
oracle certifies the search on small instances.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InputError
from .importance import ImportanceVector
from .latency import LatencyProfile
from .network import StrategyCost, UpdateStrategy

BRUTE_FORCE_MAX_LAYERS = 20

# a layer's Pareto staircase is thinned to the per-cell best entries only
# beyond this multiple of the resolution; a guard against pathological
# frontier growth, not reached at realistic sizes
_FRONTIER_SLACK = 4


@dataclass(frozen=True)
class SchedulerConfig:
    sigma: float = 0.33
    resolution: int = 500
    oracle: bool = False
    keep_table: bool = False

    def __post_init__(self):
        if not (0.0 < self.sigma <= 1.0):
            raise InputError("sigma must lie in (0, 1]")
        if self.resolution < 1:
            raise InputError("resolution must be >= 1")


class Budget(NamedTuple):
    ms: float
    clipped: bool  # sigma * T fell below T_f; only the empty strategy fits


def budget(t_total: float, t_forward: float, sigma: float) -> Budget:
    """Latency budget left for backward + reforward after the forward pass."""
    if t_total <= 0:
        raise InputError("t_total must be positive")
    if t_forward < 0:
        raise InputError("t_forward must be non-negative")
    raw = sigma * t_total - t_forward
    if raw <= 0.0:
        return Budget(0.0, True)
    return Budget(raw, False)


def discretize(t: float, budget_ms: float, resolution: int) -> int:
    """Cost in grid units, rounded up so feasibility is never overstated.

    ``t == budget_ms`` maps to exactly ``resolution`` units.
    """
    if budget_ms <= 0:
        raise InputError("budget must be positive to discretize against")
    if t <= 0:
        return 0
    return math.ceil((t / budget_ms) * resolution)


def delta_t(l: int, l_k: int, profile: LatencyProfile) -> float:
    """Incremental cost of selecting backward layer ``l`` when the nearest
    shallower selection is ``l_k`` (0 when none).

    Charges the weight gradient of ``l``, the activation-gradient chain over
    the layers strictly between the two selections (work not yet paid when
    ``l_k`` was selected), and the reforward of the newly covered span.
    """
    n = profile.n_layers
    if not (0 <= l_k < l <= n):
        raise InputError(f"need 0 <= l_k < l <= {n}, got l={l}, l_k={l_k}")
    dx_lo = max(1, l_k)
    dx_span = float(profile.cum_dx[l - 1] - profile.cum_dx[dx_lo - 1])
    re_span = float(profile.cum_re[l] - profile.cum_re[l_k])
    return float(profile.t_dw[l]) + dx_span + re_span


@dataclass(frozen=True)
class DPTable:
    """Diagnostic view of the search: best achievable importance per
    (layer, discretized budget) cell."""

    p: np.ndarray  # shape (N+1, resolution+1)
    explored: int
    pruned_count: int


@dataclass(frozen=True)
class ScheduleResult:
    strategy: UpdateStrategy
    achieved_importance: float
    predicted_extra: StrategyCost
    budget_ms: float
    slack_ms: float
    budget_clipped: bool
    explored: int
    pruned: int
    table: DPTable | None = None

    def to_document(self) -> dict:
        return {
            "selected_backward_indices": list(self.strategy.selected),
            "achieved_importance": self.achieved_importance,
            "t_backward_ms": self.predicted_extra.t_backward,
            "t_reforward_ms": self.predicted_extra.t_reforward,
            "budget_ms": self.budget_ms,
            "slack_ms": self.slack_ms,
            "subproblems": {"explored": self.explored, "pruned": self.pruned},
        }


class _Chain:
    """A partial selection chain: deepest layer, exact cost, exact gain."""

    __slots__ = ("cost", "gain", "layer", "parent")

    def __init__(self, cost, gain, layer, parent):
        self.cost = cost
        self.gain = gain
        self.layer = layer
        self.parent = parent

    def selected(self) -> tuple[int, ...]:
        out = []
        node = self
        while node.layer:
            out.append(node.layer)
            node = node.parent
        out.reverse()
        return tuple(out)


_ROOT = _Chain(0.0, 0.0, 0, None)


def _exact_gain(selected: tuple[int, ...], a: np.ndarray) -> float:
    """Importance of a selection, accumulated in ascending backward order.

    Both the search and the oracle report gains through this one summation
    so equal selections compare bit-identically.
    """
    total = 0.0
    for b in selected:
        total += float(a[b])
    return total


def _vector_key(selected: tuple[int, ...]) -> tuple[int, ...]:
    """Selection as a 0/1 vector over backward indices 1..deepest.

    Lexicographic order on these vectors is the final tie-break; trailing
    zeros beyond the deepest selection never decide a comparison between
    strategies whose deepest indices already tie.
    """
    if not selected:
        return ()
    vec = [0] * selected[-1]
    for b in selected:
        vec[b - 1] = 1
    return tuple(vec)


def _better(cand, best) -> bool:
    """Deterministic preference: more importance, then cheaper, then a
    shallower deepest layer, then the lexicographically smaller selection
    vector."""
    gain_c, cost_c, sel_c = cand
    gain_b, cost_b, sel_b = best
    if gain_c != gain_b:
        return gain_c > gain_b
    if cost_c != cost_b:
        return cost_c < cost_b
    deep_c = sel_c[-1] if sel_c else 0
    deep_b = sel_b[-1] if sel_b else 0
    if deep_c != deep_b:
        return deep_c < deep_b
    return _vector_key(sel_c) < _vector_key(sel_b)


def _pareto(chains: list[_Chain]) -> list[_Chain]:
    """Keep the cost-ascending, gain-ascending staircase.

    Exact (cost, gain) duplicates collapse to the chain with the
    lexicographically smaller selection, keeping tie-breaks reproducible.
    """
    if not chains:
        return chains
    chains.sort(key=lambda s: (s.cost, -s.gain))
    kept: list[_Chain] = []
    i = 0
    while i < len(chains):
        node = chains[i]
        j = i + 1
        while (
            j < len(chains)
            and chains[j].cost == node.cost
            and chains[j].gain == node.gain
        ):
            if _vector_key(chains[j].selected()) < _vector_key(node.selected()):
                node = chains[j]
            j += 1
        if not kept or node.gain > kept[-1].gain:
            kept.append(node)
        i = j
    return kept


def _thin(chains: list[_Chain], budget_ms: float, resolution: int) -> list[_Chain]:
    cap = max(_FRONTIER_SLACK * resolution, 4096)
    if len(chains) <= cap:
        return chains
    best_by_cell: dict[int, _Chain] = {}
    for node in chains:
        cell = discretize(node.cost, budget_ms, resolution)
        cur = best_by_cell.get(cell)
        if cur is None or node.gain > cur.gain:
            best_by_cell[cell] = node
    return _pareto(list(best_by_cell.values()))


def _empty_result(budget_value: Budget, n: int, config: SchedulerConfig) -> ScheduleResult:
    table = None
    if config.keep_table:
        table = DPTable(
            p=np.zeros((n + 1, config.resolution + 1)), explored=0, pruned_count=0
        )
    return ScheduleResult(
        strategy=UpdateStrategy(n_layers=n, selected=()),
        achieved_importance=0.0,
        predicted_extra=StrategyCost(0.0, 0.0),
        budget_ms=budget_value.ms,
        slack_ms=budget_value.ms,
        budget_clipped=budget_value.clipped,
        explored=0,
        pruned=0,
        table=table,
    )


def _closed_form_cost(profile: LatencyProfile, selected: tuple[int, ...]) -> StrategyCost:
    if not selected:
        return StrategyCost(0.0, 0.0)
    d = selected[-1]
    t_dw_sum = 0.0
    for b in selected:
        t_dw_sum += float(profile.t_dw[b])
    return StrategyCost(
        t_backward=t_dw_sum + float(profile.cum_dx[d - 1]),
        t_reforward=float(profile.cum_re[d]),
    )


def solve_dp(
    importance: ImportanceVector,
    profile: LatencyProfile,
    config: SchedulerConfig | None = None,
) -> ScheduleResult:
    """Search the maximum-importance feasible strategy.

    Layers are visited in backward order; each selectable layer extends the
    chains of every shallower predecessor. Two prunes cut the space: chains
    whose cost exceeds the budget die with all their descendants, and a
    layer whose activation-gradient prefix alone exceeds the budget is
    skipped along with everything deeper.
    """
    config = config or SchedulerConfig()
    n = profile.n_layers
    if importance.n_layers != n:
        raise InputError(
            f"importance covers {importance.n_layers} layers, profile has {n}"
        )
    bud = budget(profile.t_total, profile.t_f_total, config.sigma)
    if bud.ms <= 0:
        return _empty_result(bud, n, config)

    a = importance.a
    frontiers: dict[int, list[_Chain]] = {0: [_ROOT]}
    explored = 0
    pruned = 0
    predecessors = [0]  # 0 plus selectable layers seen so far, ascending

    for l in range(1, n + 1):
        if not profile.selectable[l]:
            continue
        if float(profile.cum_dx[l - 1]) > bud.ms:
            # no chain reaching this depth (or deeper) can fit: the
            # activation-gradient prefix alone overruns the budget
            remaining = [
                m for m in range(l, n + 1) if profile.selectable[m]
            ]
            frontier_total = sum(len(frontiers[p]) for p in predecessors)
            pruned += len(remaining) * frontier_total
            break
        gain_l = float(a[l])
        candidates: list[_Chain] = []
        for l_k in reversed(predecessors):
            inc = delta_t(l, l_k, profile)
            for node in frontiers[l_k]:
                explored += 1
                cost = node.cost + inc
                if cost > bud.ms:
                    pruned += 1
                    continue
                candidates.append(_Chain(cost, node.gain + gain_l, l, node))
        frontiers[l] = _thin(
            _pareto(candidates), bud.ms, config.resolution
        )
        predecessors.append(l)

    best_selected: tuple[int, ...] = ()
    best = (0.0, 0.0, ())  # (gain, cost, selection) of the empty strategy
    for l, chains in frontiers.items():
        if l == 0 or not chains:
            continue
        for node in chains:
            cand_sel = node.selected()
            cand = (_exact_gain(cand_sel, a), node.cost, cand_sel)
            if _better(cand, best):
                best = cand
                best_selected = cand_sel

    strategy = UpdateStrategy(n_layers=n, selected=best_selected)
    extra = _closed_form_cost(profile, best_selected)
    table = None
    if config.keep_table:
        table = _build_table(frontiers, bud.ms, config.resolution, n, explored, pruned)
    return ScheduleResult(
        strategy=strategy,
        achieved_importance=best[0],
        predicted_extra=extra,
        budget_ms=bud.ms,
        slack_ms=bud.ms - extra.t_total_extra,
        budget_clipped=bud.clipped,
        explored=explored,
        pruned=pruned,
        table=table,
    )


def _build_table(frontiers, budget_ms, resolution, n, explored, pruned) -> DPTable:
    p = np.zeros((n + 1, resolution + 1))
    for l in range(1, n + 1):
        p[l, :] = p[l - 1, :]
        for node in frontiers.get(l, ()):
            cell = discretize(node.cost, budget_ms, resolution)
            if cell <= resolution and node.gain > p[l, cell]:
                p[l, cell] = node.gain
        np.maximum.accumulate(p[l, :], out=p[l, :])
    return DPTable(p=p, explored=explored, pruned_count=pruned)


def brute_force(
    importance: ImportanceVector,
    profile: LatencyProfile,
    budget_ms: float,
) -> ScheduleResult:
    """Exhaustive certification oracle over all selectable subsets.

    Shares the search's exact cost arithmetic and tie-break order, so on any
    instance within the layer guard the two return identical strategies.
    """
    n = profile.n_layers
    if importance.n_layers != n:
        raise InputError(
            f"importance covers {importance.n_layers} layers, profile has {n}"
        )
    if n > BRUTE_FORCE_MAX_LAYERS:
        raise InputError(
            f"brute force capped at {BRUTE_FORCE_MAX_LAYERS} layers, got {n}"
        )
    a = importance.a
    selectable = [b for b in range(1, n + 1) if profile.selectable[b]]
    best = (0.0, 0.0, ())
    explored = 0
    pruned = 0
    for r in range(len(selectable) + 1):
        for combo in itertools.combinations(selectable, r):
            explored += 1
            cost = _closed_form_cost(profile, combo)
            if cost.t_total_extra > budget_ms:
                pruned += 1
                continue
            cand = (_exact_gain(combo, a), cost.t_total_extra, combo)
            if _better(cand, best):
                best = cand
    extra = _closed_form_cost(profile, best[2])
    return ScheduleResult(
        strategy=UpdateStrategy(n_layers=n, selected=best[2]),
        achieved_importance=best[0],
        predicted_extra=extra,
        budget_ms=budget_ms,
        slack_ms=budget_ms - extra.t_total_extra,
        budget_clipped=False,
        explored=explored,
        pruned=pruned,
    )


def _quantized(rng: np.random.Generator, low: float, high: float, size, grid: int = 1024):
    """Uniform draws snapped to a binary grid, so cost sums stay float-exact."""
    raw = rng.uniform(low, high, size)
    return np.round(raw * grid) / grid


def random_instance(rng: np.random.Generator, n_min: int = 4, n_max: int = 14) -> dict:
    """One random scheduling instance for certification runs."""
    n = int(rng.integers(n_min, n_max + 1))
    selectable = rng.random(n) < 0.85
    if not selectable.any():
        selectable[int(rng.integers(0, n))] = True
    pad = lambda arr: np.concatenate(([0.0], arr))
    t_dw = _quantized(rng, 0.05, 2.0, n)
    t_dw[~selectable] = 0.0
    t_dx = _quantized(rng, 0.05, 2.0, n)
    t_re = _quantized(rng, 0.05, 2.0, n)
    t_f = _quantized(rng, 0.05, 1.0, n)
    a = rng.uniform(0.0, 10.0, n)
    a[~selectable] = 0.0
    profile = LatencyProfile.from_components(
        t_f=pad(t_f),
        t_dw=pad(t_dw),
        t_dx=pad(t_dx),
        t_re=pad(t_re),
        selectable=np.concatenate(([False], selectable)),
    )
    importance = ImportanceVector(a=pad(a))
    frac = float(rng.uniform(0.05, 1.0))
    extra_total = profile.t_b_total + profile.t_re_total
    sigma = (frac * extra_total + profile.t_f_total) / profile.t_total
    sigma = min(max(sigma, 1e-9), 1.0)
    return {"importance": importance, "profile": profile, "sigma": sigma}


def instance_to_document(instance: dict) -> dict:
    prof = instance["profile"]
    return {
        "a": [float(x) for x in instance["importance"].a[1:]],
        "t_f": [float(x) for x in prof.t_f[1:]],
        "t_dw": [float(x) for x in prof.t_dw[1:]],
        "t_dx": [float(x) for x in prof.t_dx[1:]],
        "t_re": [float(x) for x in prof.t_re[1:]],
        "selectable": [bool(x) for x in prof.selectable[1:]],
        "sigma": instance["sigma"],
    }


@dataclass(frozen=True)
class CertificationReport:
    instances: int
    matches: int
    elapsed_s: float
    failures: tuple[dict, ...] = ()

    @property
    def all_match(self) -> bool:
        return self.matches == self.instances


def certify(instances: int, max_n: int = 14, seed: int = 0) -> CertificationReport:
    """Cross-check the search against the enumeration oracle on random
    instances; any mismatch is serialized for replay."""
    if instances < 1:
        raise InputError("need at least one instance")
    if max_n > BRUTE_FORCE_MAX_LAYERS:
        raise InputError(f"max_n capped at {BRUTE_FORCE_MAX_LAYERS}")
    rng = np.random.default_rng(seed)
    matches = 0
    failures = []
    started = time.perf_counter()
    for index in range(instances):
        instance = random_instance(rng, n_min=4, n_max=max_n)
        config = SchedulerConfig(sigma=instance["sigma"], resolution=10_000)
        dp = solve_dp(instance["importance"], instance["profile"], config)
        bf = brute_force(instance["importance"], instance["profile"], dp.budget_ms)
        if (
            dp.strategy.selected == bf.strategy.selected
            and dp.achieved_importance == bf.achieved_importance
        ):
            matches += 1
        else:
            failures.append(
                {
                    "index": index,
                    "instance": instance_to_document(instance),
                    "dp": dp.to_document(),
                    "oracle": bf.to_document(),
                }
            )
    elapsed = time.perf_counter() - started
    return CertificationReport(
        instances=instances,
        matches=matches,
        elapsed_s=elapsed,
        failures=tuple(failures),
    )


def load_importance_file(path) -> ImportanceVector:
    with open(path) as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
    try:
        values = [float(x) for x in document["a"]]
    except (KeyError, TypeError) as exc:
        raise InputError(f"importance file malformed: {exc}") from None
    return ImportanceVector(a=np.concatenate(([0.0], values)))
