"""Sweep the planted stage-1 bias and watch the diagnostics move.

The scenario inflates the lagged-sales feature on future rows by a
configurable factor. More inflation means stage 1 over-forecasts harder,
and the stage-2 loss has to spend more of its budget reconciling the
inflated pseudo-labels with the fixed category totals -- so the
fit/constraint term ratio climbs. Takes ~10s.
"""

from triboost import ScenarioConfig, category_adherence, generate, run_pipeline

print(f"{'bias':>6s}{'s1 adherence':>14s}{'s3 adherence':>14s}"
      f"{'held-out bias':>16s}{'fit/constraint':>16s}")
for bias in (0.0, 0.15, 0.30):
    dataset, _ = generate(ScenarioConfig(stage1_bias_injection=bias))
    result = run_pipeline(dataset)
    a1 = category_adherence(result.outputs.stage1, dataset, future_only=True)
    a3 = category_adherence(result.outputs.stage3, dataset, future_only=True)
    d = result.diagnostics
    held_out = f"{d.bias_direction} {d.bias_consistency_rate:.0%}"
    print(f"{bias:6.2f}{a1.mean:14.4f}{a3.mean:14.5f}{held_out:>16s}"
          f"{d.stage2_term_ratio:16.4f}")

print("\nstage-1 adherence tracks the planted bias; stage 3 stays pinned to")
print("the totals regardless, and the term ratio orders the three runs.")
