"""Discrete simulation of the adapt-while-serving pipeline.

An episode replays a drifting synthetic environment through the full loop:
per batch, channel statistics are sampled, layer importance is assessed
against the tracked history, a runtime latency profile is built from the
system-state trace, the scheduler picks the update strategy, and a
ground-truth executor (same latency physics, plus jitter and instantaneous
state sampling) runs the three phases. A full-update replay of the same
episode provides the speedup baseline.

The model itself is a response-distribution proxy: updating a layer closes
a fraction of its gap to the current environment distribution. Real weights
and gradients are out of scope; importance capture and the adaptation loss
stand in for accuracy.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .importance import (
    Embedding,
    EmbeddingHistory,
    FeatureStats,
    ImportanceVector,
    adaptation_loss,
    assess,
    assessment_flops,
    update_history,
)
from .latency import (
    DeviceSpec,
    OfflineProfile,
    StateTrace,
    build_profile,
    expansion_factors,
    eta as layer_eta,
    load_device_file,
    load_offline_profile_file,
    load_trace_file,
    predict_layer_latency,
    split_backward,
)
from .network import Network, UpdateStrategy, load_network_file
from .scheduler import SchedulerConfig, solve_dp


@dataclass(frozen=True)
class Shift:
    """A persistent environment change, active from ``batch_index`` on."""

    batch_index: int
    layers: tuple[int, ...]  # forward ids
    mean_offset_sigmas: float
    var_scale: float = 1.0

    def __post_init__(self):
        if self.batch_index < 0:
            raise InputError("shift batch_index must be non-negative")
        if not self.layers:
            raise InputError("shift must name at least one layer")
        if self.var_scale <= 0:
            raise InputError("var_scale must be positive")


@dataclass(frozen=True)
class EnvironmentSpec:
    """Synthetic environment: per-layer channel distributions plus a shift
    schedule. Mean offsets are expressed in units of the base standard
    deviation of the affected channel."""

    channels: tuple[int, ...]
    positions: tuple[int, ...]
    base_means: tuple[np.ndarray, ...]
    base_vars: tuple[np.ndarray, ...]
    shifts: tuple[Shift, ...]
    batch_size: int

    def __post_init__(self):
        n = len(self.channels)
        if n == 0:
            raise InputError("environment must cover at least one layer")
        if not (len(self.positions) == len(self.base_means) == len(self.base_vars) == n):
            raise InputError("environment per-layer fields must share one length")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        means = []
        varis = []
        for i in range(n):
            if self.channels[i] < 1 or self.positions[i] < 1:
                raise InputError(f"layer {i}: channels and positions must be >= 1")
            m = np.asarray(self.base_means[i], dtype=float)
            v = np.asarray(self.base_vars[i], dtype=float)
            if m.shape != (self.channels[i],) or v.shape != (self.channels[i],):
                raise InputError(f"layer {i}: base params must match channel count")
            if np.any(v <= 0):
                raise InputError(f"layer {i}: base variances must be positive")
            means.append(m)
            varis.append(v)
        object.__setattr__(self, "base_means", tuple(means))
        object.__setattr__(self, "base_vars", tuple(varis))
        indices = [s.batch_index for s in self.shifts]
        if indices != sorted(indices) or len(set(indices)) != len(indices):
            raise InputError("shift batch indices must be strictly increasing")
        for s in self.shifts:
            for layer in s.layers:
                if not 0 <= layer < n:
                    raise InputError(f"shift names unknown layer {layer}")

    @property
    def n_layers(self) -> int:
        return len(self.channels)

    def params_at(self, batch_index: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Environment (mean, variance) per layer with all shifts up to and
        including ``batch_index`` applied."""
        means = [m.copy() for m in self.base_means]
        varis = [v.copy() for v in self.base_vars]
        for s in self.shifts:
            if s.batch_index > batch_index:
                break
            for layer in s.layers:
                means[layer] = means[layer] + s.mean_offset_sigmas * np.sqrt(
                    self.base_vars[layer]
                )
                varis[layer] = varis[layer] * s.var_scale
        return means, varis


@dataclass(frozen=True)
class ModelResponseState:
    """Distribution the model currently reproduces per layer. The observed
    feature distribution of a batch is the base distribution displaced by
    the model's remaining gap to the environment."""

    means: tuple[np.ndarray, ...]
    variances: tuple[np.ndarray, ...]
    adaptation_gain: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.adaptation_gain <= 1.0):
            raise InputError("adaptation_gain must lie in (0, 1]")
        for v in self.variances:
            if np.any(np.asarray(v) <= 0):
                raise InputError("model variances must be positive")

    @classmethod
    def from_environment(cls, env: EnvironmentSpec, adaptation_gain: float = 1.0):
        """A model fully adapted to the unshifted base environment."""
        return cls(
            means=tuple(m.copy() for m in env.base_means),
            variances=tuple(v.copy() for v in env.base_vars),
            adaptation_gain=adaptation_gain,
        )


def observed_params(
    env: EnvironmentSpec,
    model: ModelResponseState,
    batch_index: int,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-layer distribution a batch actually exhibits: the base
    distribution shifted by how far the model lags the environment."""
    env_means, env_vars = env.params_at(batch_index)
    means = []
    varis = []
    for base_m, base_v, em, ev, mm, mv in zip(
        env.base_means, env.base_vars, env_means, env_vars, model.means, model.variances
    ):
        means.append(base_m + (em - mm))
        varis.append(base_v * ev / mv)
    return means, varis


def observed_embeddings(
    env: EnvironmentSpec, model: ModelResponseState, batch_index: int
) -> list[Embedding]:
    """Noise-free embeddings of the observed distributions."""
    means, varis = observed_params(env, model, batch_index)
    out = []
    for m, v in zip(means, varis):
        values = np.empty(2 * m.size)
        values[0::2] = m
        values[1::2] = v
        out.append(Embedding(values))
    return out


def generate_batch(
    env: EnvironmentSpec,
    model: ModelResponseState,
    batch_index: int,
    rng: np.random.Generator,
    exact: bool = False,
) -> list[FeatureStats]:
    """Sample one batch's per-layer channel statistics.

    ``exact`` skips sampling and reports the underlying distribution
    parameters directly (the infinite-batch limit).
    """
    if batch_index < 0:
        raise InputError("batch_index must be non-negative")
    means, varis = observed_params(env, model, batch_index)
    stats = []
    for layer in range(env.n_layers):
        n_samples = env.batch_size * env.positions[layer]
        if exact:
            stats.append(
                FeatureStats(
                    means=means[layer],
                    variances=varis[layer],
                    sample_count=n_samples,
                )
            )
            continue
        std = np.sqrt(varis[layer])
        draws = rng.normal(
            loc=means[layer][:, None],
            scale=std[:, None],
            size=(env.channels[layer], n_samples),
        )
        mu = draws.mean(axis=1)
        var = np.mean((draws - mu[:, None]) ** 2, axis=1)
        stats.append(FeatureStats(means=mu, variances=var, sample_count=n_samples))
    return stats


@dataclass(frozen=True)
class ReusePlan:
    """Which layers the reforward pass actually re-executes.

    The input activation of the earliest-updated layer is retained, so every
    layer before it is skipped; an empty strategy skips the whole pass.
    """

    n_layers: int
    first_update_forward_id: int | None
    retained_forward_id: int | None
    skipped: tuple[int, ...]
    executed: tuple[int, ...]


def reuse_plan(strategy: UpdateStrategy, network: Network) -> ReusePlan:
    n = network.n_layers
    if strategy.n_layers != n:
        raise InputError("strategy and network disagree on layer count")
    if strategy.is_empty:
        return ReusePlan(
            n_layers=n,
            first_update_forward_id=None,
            retained_forward_id=None,
            skipped=tuple(range(n)),
            executed=(),
        )
    first = network.forward_id(strategy.deepest)
    return ReusePlan(
        n_layers=n,
        first_update_forward_id=first,
        retained_forward_id=first - 1 if first > 0 else None,
        skipped=tuple(range(first)),
        executed=tuple(range(first, n)),
    )


@dataclass(frozen=True)
class ExecutionResult:
    """Per-layer executed latencies (backward-indexed, slot 0 unused)."""

    f_exec: np.ndarray
    dw_exec: np.ndarray
    dx_exec: np.ndarray
    re_exec: np.ndarray
    start_ms: float
    finish_ms: float

    @property
    def t_f_total(self) -> float:
        return float(np.sum(self.f_exec))

    @property
    def t_b_total(self) -> float:
        return float(np.sum(self.dw_exec) + np.sum(self.dx_exec))

    @property
    def t_re_total(self) -> float:
        return float(np.sum(self.re_exec))

    @property
    def t_total(self) -> float:
        return self.t_f_total + self.t_b_total + self.t_re_total


def execute_ground_truth(
    network: Network,
    offline: OfflineProfile,
    device: DeviceSpec,
    state_at,
    strategy: UpdateStrategy,
    plan: ReusePlan,
    jitter_eps: float = 0.0,
    rng: np.random.Generator | None = None,
    t_start_ms: float = 0.0,
) -> ExecutionResult:
    """Run the three phases against the live state trace.

    Uses the same latency physics as the predictor, but samples the system
    state at each layer's own execution instant and applies multiplicative
    jitter Uniform(1-eps, 1+eps), so prediction error is exactly zero only
    for a static state with eps=0.
    """
    if not (0.0 <= jitter_eps < 1.0):
        raise InputError("jitter_eps must lie in [0, 1)")
    if jitter_eps > 0 and rng is None:
        raise InputError("jitter requires an rng")
    n = network.n_layers
    strategy.validate_against(network)
    f_exec = np.zeros(n + 1)
    dw_exec = np.zeros(n + 1)
    dx_exec = np.zeros(n + 1)
    re_exec = np.zeros(n + 1)
    now = t_start_ms

    def jitter() -> float:
        if rng is None:
            return 1.0
        return float(rng.uniform(1.0 - jitter_eps, 1.0 + jitter_eps))

    def run(b: int, t_off: float) -> float:
        nonlocal now
        layer = network.layer_by_backward(b)
        factors = expansion_factors(device, state_at(now))
        lat = predict_layer_latency(t_off, layer_eta(layer, device), factors) * jitter()
        now += lat
        return lat

    # forward: input side to output side
    for b in range(n, 0, -1):
        f_exec[b] = run(b, float(offline.t_f[b]))

    # backward: output side down to the deepest selected layer
    d = strategy.deepest
    selected = set(strategy.selected)
    for b in range(1, d + 1):
        layer = network.layer_by_backward(b)
        dw_off, dx_off = split_backward(float(offline.t_b[b]), layer)
        if b < d:
            dx_exec[b] = run(b, dx_off)
        if b in selected:
            dw_exec[b] = run(b, dw_off)

    # reforward: only the layers the reuse plan exposes
    for forward_id in plan.executed:
        b = network.backward_index(forward_id)
        re_exec[b] = run(b, float(offline.t_re[b]))

    return ExecutionResult(
        f_exec=f_exec,
        dw_exec=dw_exec,
        dx_exec=dx_exec,
        re_exec=re_exec,
        start_ms=t_start_ms,
        finish_ms=now,
    )


def apply_update(
    model: ModelResponseState,
    strategy: UpdateStrategy,
    env_means,
    env_vars,
) -> ModelResponseState:
    """Move each selected layer's response a fraction ``adaptation_gain``
    toward the current environment distribution."""
    n = len(model.means)
    if strategy.is_empty:
        return model
    g = model.adaptation_gain
    means = list(model.means)
    varis = list(model.variances)
    for b in strategy.selected:
        i = n - b
        means[i] = means[i] + g * (env_means[i] - means[i])
        varis[i] = varis[i] + g * (env_vars[i] - varis[i])
    return ModelResponseState(
        means=tuple(means), variances=tuple(varis), adaptation_gain=g
    )


@dataclass(frozen=True)
class ControllerConfig:
    enabled: bool = False
    target_r: float = 1.5
    sigma_min: float = 0.1
    sigma_max: float = 1.0
    window: int = 5
    decrease: float = 0.9
    increase: float = 1.1

    def __post_init__(self):
        if not (0.0 < self.sigma_min <= self.sigma_max <= 1.0):
            raise InputError("need 0 < sigma_min <= sigma_max <= 1")
        if self.window < 1:
            raise InputError("controller window must be >= 1")
        if not (0.0 < self.decrease < 1.0 < self.increase):
            raise InputError("need decrease < 1 < increase")


def sigma_controller(
    r_history,
    sigma: float,
    config: ControllerConfig = ControllerConfig(enabled=True),
) -> float:
    """Multiplicative turnaround controller: shrink the acceleration factor
    while the recent mean turnaround exceeds the target, grow it while
    below, and leave it alone on the deadband."""
    recent = list(r_history)[-config.window:]
    if not recent:
        return sigma
    mean_r = sum(recent) / len(recent)
    if mean_r > config.target_r:
        sigma = sigma * config.decrease
    elif mean_r < config.target_r:
        sigma = sigma * config.increase
    return min(max(sigma, config.sigma_min), config.sigma_max)


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str  # "sequential" | "parallel"
    seed: int
    batches: int
    environment: EnvironmentSpec
    network: Network
    offline: OfflineProfile
    device: DeviceSpec
    trace: StateTrace
    sigma: float = 0.33
    resolution: int = 500
    alpha: float = 0.1
    kl_mode: str = "gaussian"
    adaptation_gain: float = 1.0
    jitter_eps: float = 0.0
    inter_batch_ms: float | None = None
    exact_stats: bool = False
    controller: ControllerConfig = ControllerConfig()

    def __post_init__(self):
        if self.mode not in ("sequential", "parallel"):
            raise InputError(f"unknown mode {self.mode!r}")
        if self.batches < 1:
            raise InputError("episode needs at least one batch")
        if self.seed < 0:
            raise InputError("seed must be non-negative")
        if self.environment.n_layers != self.network.n_layers:
            raise InputError(
                f"environment covers {self.environment.n_layers} layers, "
                f"network has {self.network.n_layers}"
            )
        for env_c, layer in zip(self.environment.channels, self.network.layers):
            if env_c != layer.channels:
                raise InputError(
                    f"layer {layer.id}: environment channels {env_c} disagree "
                    f"with network channels {layer.channels}"
                )


@dataclass(frozen=True)
class BatchRecord:
    index: int
    arrival_ms: float
    start_ms: float
    wait_ms: float
    sigma: float
    budget_ms: float
    budget_clipped: bool
    selected: tuple[int, ...]
    deepest: int
    importance_total: float
    importance_captured: float
    capture_ratio: float
    assess_flops: float
    predicted_f_ms: float
    predicted_b_ms: float
    predicted_re_ms: float
    predicted_total_ms: float
    executed_f_ms: float
    executed_b_ms: float
    executed_re_ms: float
    executed_total_ms: float
    rel_error: float
    loss_before: float
    loss_after: float
    r: float
    staleness: int
    finish_ms: float


@dataclass(frozen=True)
class EpisodeAggregates:
    batches: int
    mean_executed_total_ms: float
    replay_mean_total_ms: float
    latency_ratio_vs_full: float
    speedup_vs_full: float
    mean_capture_ratio: float
    mean_rel_error: float
    mean_r: float
    total_wait_ms: float
    final_sigma: float


@dataclass(frozen=True)
class EpisodeReport:
    scenario: str
    mode: str
    seed: int
    records: tuple[BatchRecord, ...]
    aggregates: EpisodeAggregates


def _full_strategy(network: Network) -> UpdateStrategy:
    return UpdateStrategy(
        n_layers=network.n_layers, selected=network.selectable_backward()
    )


def _replay_full_updates(scenario: Scenario, rng: np.random.Generator) -> float:
    """Mean per-batch executed latency when every selectable layer is
    updated every batch, on the same arrival process."""
    network = scenario.network
    full = _full_strategy(network)
    plan = reuse_plan(full, network)
    inter = scenario.inter_batch_ms
    if inter is None:
        inter = float(np.sum(scenario.offline.t_f))
    prev_finish = 0.0
    total = 0.0
    for i in range(scenario.batches):
        arrival = i * inter
        start = max(arrival, prev_finish)
        execd = execute_ground_truth(
            network,
            scenario.offline,
            scenario.device,
            scenario.trace.state_at,
            full,
            plan,
            jitter_eps=scenario.jitter_eps,
            rng=rng,
            t_start_ms=start,
        )
        total += execd.t_total
        prev_finish = execd.finish_ms
    return total / scenario.batches


def run_episode(scenario: Scenario) -> EpisodeReport:
    """Simulate one episode and its full-update replay baseline."""
    network = scenario.network
    n = network.n_layers
    seq = np.random.SeedSequence(scenario.seed)
    rng_env, rng_exec, rng_replay = (np.random.default_rng(s) for s in seq.spawn(3))

    env = scenario.environment
    model = ModelResponseState.from_environment(env, scenario.adaptation_gain)
    history: EmbeddingHistory | None = None
    sigma = scenario.sigma
    inter = scenario.inter_batch_ms
    if inter is None:
        inter = float(np.sum(scenario.offline.t_f))
    sequential = scenario.mode == "sequential"

    prev_finish = 0.0
    r_history: list[float] = []
    adapt_log: list[tuple[int, float]] = []  # (batch index, adaptation finish)
    records: list[BatchRecord] = []

    for i in range(scenario.batches):
        arrival = i * inter
        start = max(arrival, prev_finish)
        wait = start - arrival if sequential else 0.0
        staleness = 0
        if not sequential:
            fresh = [idx for idx, finish in adapt_log if finish <= arrival]
            latest = fresh[-1] if fresh else -1
            staleness = i - 1 - latest

        stats = generate_batch(env, model, i, rng_env, exact=scenario.exact_stats)
        embeddings = [Embedding.from_stats(s) for s in stats]
        if history is None:
            history = EmbeddingHistory.seed(embeddings, alpha=scenario.alpha)
            vector = ImportanceVector(a=np.zeros(n + 1), mode=scenario.kl_mode)
            flops = assessment_flops(network, stats)
        else:
            vector, flops = assess(network, history, stats, mode=scenario.kl_mode)
        loss_before = adaptation_loss(
            history.embeddings, embeddings, mode=scenario.kl_mode
        )

        state = scenario.trace.state_at(start)
        profile = build_profile(network, scenario.offline, scenario.device, state)
        sched = solve_dp(
            vector,
            profile,
            SchedulerConfig(sigma=sigma, resolution=scenario.resolution),
        )
        plan = reuse_plan(sched.strategy, network)
        execd = execute_ground_truth(
            network,
            scenario.offline,
            scenario.device,
            scenario.trace.state_at,
            sched.strategy,
            plan,
            jitter_eps=scenario.jitter_eps,
            rng=rng_exec,
            t_start_ms=start,
        )

        env_means, env_vars = env.params_at(i)
        model = apply_update(model, sched.strategy, env_means, env_vars)
        loss_after = adaptation_loss(
            history.embeddings,
            observed_embeddings(env, model, i),
            mode=scenario.kl_mode,
        )
        history = update_history(history, embeddings)

        predicted_total = profile.t_f_total + sched.predicted_extra.t_total_extra
        executed_total = execd.t_total
        rel_error = (
            abs(executed_total - predicted_total) / predicted_total
            if predicted_total > 0
            else 0.0
        )
        t_adapt = execd.t_f_total + execd.t_b_total
        denom = t_adapt + execd.t_re_total
        r = (wait + denom) / denom if denom > 0 else 1.0
        capture = (
            sched.achieved_importance / vector.total if vector.total > 0 else 1.0
        )

        prev_finish = execd.finish_ms
        adapt_log.append((i, execd.finish_ms))
        records.append(
            BatchRecord(
                index=i,
                arrival_ms=arrival,
                start_ms=start,
                wait_ms=wait,
                sigma=sigma,
                budget_ms=sched.budget_ms,
                budget_clipped=sched.budget_clipped,
                selected=sched.strategy.selected,
                deepest=sched.strategy.deepest,
                importance_total=vector.total,
                importance_captured=sched.achieved_importance,
                capture_ratio=capture,
                assess_flops=flops,
                predicted_f_ms=profile.t_f_total,
                predicted_b_ms=sched.predicted_extra.t_backward,
                predicted_re_ms=sched.predicted_extra.t_reforward,
                predicted_total_ms=predicted_total,
                executed_f_ms=execd.t_f_total,
                executed_b_ms=execd.t_b_total,
                executed_re_ms=execd.t_re_total,
                executed_total_ms=executed_total,
                rel_error=rel_error,
                loss_before=loss_before,
                loss_after=loss_after,
                r=r,
                staleness=staleness,
                finish_ms=execd.finish_ms,
            )
        )

        r_history.append(r)
        if scenario.controller.enabled:
            sigma = sigma_controller(r_history, sigma, scenario.controller)

    replay_mean = _replay_full_updates(scenario, rng_replay)
    mean_total = sum(rec.executed_total_ms for rec in records) / len(records)
    aggregates = EpisodeAggregates(
        batches=len(records),
        mean_executed_total_ms=mean_total,
        replay_mean_total_ms=replay_mean,
        latency_ratio_vs_full=mean_total / replay_mean if replay_mean > 0 else 1.0,
        speedup_vs_full=replay_mean / mean_total if mean_total > 0 else 1.0,
        mean_capture_ratio=sum(r.capture_ratio for r in records) / len(records),
        mean_rel_error=sum(r.rel_error for r in records) / len(records),
        mean_r=sum(r.r for r in records) / len(records),
        total_wait_ms=sum(r.wait_ms for r in records),
        final_sigma=sigma,
    )
    return EpisodeReport(
        scenario=scenario.name,
        mode=scenario.mode,
        seed=scenario.seed,
        records=tuple(records),
        aggregates=aggregates,
    )


# --- report serialization ---------------------------------------------------


def _record_row(rec: BatchRecord) -> dict:
    row = {}
    for name, value in rec.__dict__.items():
        if name == "selected":
            row[name] = "|".join(str(b) for b in value)
        elif isinstance(value, bool):
            row[name] = int(value)
        else:
            row[name] = value
    return row


def report_to_document(report: EpisodeReport) -> dict:
    return {
        "scenario": report.scenario,
        "mode": report.mode,
        "seed": report.seed,
        "aggregates": dict(report.aggregates.__dict__),
        "batches": [
            {
                **{
                    k: (list(v) if isinstance(v, tuple) else v)
                    for k, v in rec.__dict__.items()
                }
            }
            for rec in report.records
        ],
    }


def report_json(report: EpisodeReport) -> str:
    return json.dumps(report_to_document(report), indent=2, sort_keys=True) + "\n"


def report_csv(report: EpisodeReport) -> str:
    buf = io.StringIO()
    fields = list(BatchRecord.__dataclass_fields__)
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for rec in report.records:
        writer.writerow(_record_row(rec))
    return buf.getvalue()


# --- scenario files ----------------------------------------------------------

_SCENARIO_FIELDS = frozenset(
    {
        "name", "mode", "seed", "batches", "batch_size", "inter_batch_ms",
        "network", "offline_profile", "device", "state_trace", "scheduler",
        "alpha", "kl_mode", "adaptation_gain", "jitter", "exact_stats",
        "controller", "environment",
    }
)
_ENV_FIELDS = frozenset({"base_mean", "base_var", "positions", "shifts"})


def environment_from_config(network: Network, cfg: dict, batch_size: int) -> EnvironmentSpec:
    unknown = set(cfg) - _ENV_FIELDS
    if unknown:
        raise InputError(f"environment: unknown fields {sorted(unknown)}")
    n = network.n_layers
    base_mean = cfg.get("base_mean", 0.0)
    base_var = cfg.get("base_var", 1.0)
    positions = cfg.get("positions", 1)
    if isinstance(positions, (int, float)):
        positions = [int(positions)] * n
    if len(positions) != n:
        raise InputError(f"environment.positions must cover {n} layers")
    channels = tuple(layer.channels for layer in network.layers)
    means = tuple(np.full(c, float(base_mean)) for c in channels)
    varis = tuple(np.full(c, float(base_var)) for c in channels)
    shifts = []
    for k, raw in enumerate(cfg.get("shifts", [])):
        try:
            shifts.append(
                Shift(
                    batch_index=int(raw["batch"]),
                    layers=tuple(int(x) for x in raw["layers"]),
                    mean_offset_sigmas=float(raw["mean_offset_sigmas"]),
                    var_scale=float(raw.get("var_scale", 1.0)),
                )
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"environment.shifts[{k}] malformed: {exc}") from None
    return EnvironmentSpec(
        channels=channels,
        positions=tuple(int(p) for p in positions),
        base_means=means,
        base_vars=varis,
        shifts=tuple(shifts),
        batch_size=batch_size,
    )


def load_scenario_file(path) -> Scenario:
    path = Path(path)
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: scenario must be an object")
    unknown = set(cfg) - _SCENARIO_FIELDS
    if unknown:
        raise InputError(f"{path}: unknown fields {sorted(unknown)}")

    def require(key):
        if key not in cfg:
            raise InputError(f"{path}: missing field {key!r}")
        return cfg[key]

    base = path.parent
    network = load_network_file(base / require("network"))
    offline = load_offline_profile_file(
        base / require("offline_profile"), network.n_layers
    )
    device = load_device_file(base / require("device"))
    trace = load_trace_file(base / require("state_trace"))
    sched_cfg = cfg.get("scheduler", {})
    controller_cfg = cfg.get("controller")
    controller = ControllerConfig()
    if controller_cfg is not None:
        try:
            controller = ControllerConfig(**controller_cfg)
        except TypeError as exc:
            raise InputError(f"{path}: controller malformed ({exc})") from None
    batch_size = int(cfg.get("batch_size", 1))
    environment = environment_from_config(
        network, require("environment"), batch_size
    )
    return Scenario(
        name=str(cfg.get("name", path.stem)),
        mode=str(require("mode")),
        seed=int(cfg.get("seed", 0)),
        batches=int(require("batches")),
        environment=environment,
        network=network,
        offline=offline,
        device=device,
        trace=trace,
        sigma=float(sched_cfg.get("sigma", 0.33)),
        resolution=int(sched_cfg.get("resolution", 500)),
        alpha=float(cfg.get("alpha", 0.1)),
        kl_mode=str(cfg.get("kl_mode", "gaussian")),
        adaptation_gain=float(cfg.get("adaptation_gain", 1.0)),
        jitter_eps=float(cfg.get("jitter", 0.0)),
        inter_batch_ms=(
            float(cfg["inter_batch_ms"])
            if cfg.get("inter_batch_ms") is not None
            else None
        ),
        exact_stats=bool(cfg.get("exact_stats", False)),
        controller=controller,
    )
