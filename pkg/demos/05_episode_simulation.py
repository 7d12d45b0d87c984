"""End-to-end episodes: drift recovery and the turnaround controller.

Runs the bundled drift scenario (three layers shift at batch 5) and prints
the per-batch story: what the assessor saw, what the scheduler picked, what
it cost against the full-update replay. Then runs the contended scenario
where the controller walks the acceleration factor down until the queue
clears.
"""

from ttasched import run_episode
from ttasched.presets import controller_scenario, drift_scenario

report = run_episode(drift_scenario())
print(f"scenario {report.scenario!r} ({report.mode}, seed {report.seed})")
print(f"  {'batch':>5} {'selected':>16} {'capture':>8} {'extra ms':>9} "
      f"{'budget':>7} {'loss before->after':>20}")
for rec in report.records:
    extra = rec.executed_b_ms + rec.executed_re_ms
    print(
        f"  {rec.index:>5} {str(rec.selected):>16} {rec.capture_ratio:8.2f}"
        f" {extra:9.2f} {rec.budget_ms:7.2f}"
        f" {rec.loss_before:9.2f} -> {rec.loss_after:.2f}"
    )
agg = report.aggregates
print(
    f"\n  mean latency {agg.mean_executed_total_ms:.2f} ms vs full-update replay "
    f"{agg.replay_mean_total_ms:.2f} ms"
)
print(
    f"  latency ratio {agg.latency_ratio_vs_full:.3f} "
    f"(speedup {agg.speedup_vs_full:.2f}x), capture {agg.mean_capture_ratio:.3f}, "
    f"predictor error {agg.mean_rel_error:.4f}"
)

print("\nturnaround controller under contention:")
ctrl = run_episode(controller_scenario())
print(f"  {'batch':>5} {'sigma':>7} {'wait ms':>8} {'r':>6}")
for rec in ctrl.records[::3]:
    print(f"  {rec.index:>5} {rec.sigma:7.3f} {rec.wait_ms:8.1f} {rec.r:6.2f}")
print(f"  final sigma {ctrl.aggregates.final_sigma:.3f}, "
      f"mean turnaround {ctrl.aggregates.mean_r:.2f}")
