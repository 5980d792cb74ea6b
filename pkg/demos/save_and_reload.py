"""Model persistence round trip: save, reload, compare bit for bit."""

import json
import tempfile
from pathlib import Path

import numpy as np

from triboost import (
    PipelineConfig,
    ScenarioConfig,
    TrainConfig,
    generate,
    load_model,
    run_pipeline,
    save_model,
)

# quick fit on a scaled-down scenario
config = ScenarioConfig(num_weeks_hist=30, num_weeks_future=8,
                        launch_schedule={"P4": 30})
dataset, _ = generate(config)
result = run_pipeline(
    dataset,
    PipelineConfig(stage1=TrainConfig(num_rounds=60, max_depth=3)),
    with_diagnostics=False,
)

model = result.stage2.model
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.json"
    save_model(model, path)
    print(f"wrote {path.stat().st_size} bytes")

    reloaded = load_model(path)
    same = np.array_equal(reloaded.predict(dataset.features),
                          model.predict(dataset.features))
    print(f"reloaded predictions bitwise identical: {same}")

    # saving again produces the same bytes -- no timestamps, no float drift
    again = Path(tmp) / "again.json"
    save_model(reloaded, again)
    print(f"re-saved file byte-identical: {again.read_bytes() == path.read_bytes()}")

    doc = json.loads(path.read_text())
    print(f"\ntop-level keys: {sorted(doc)}")
    print(f"trees: {len(doc['trees'])}, base_score: {doc['base_score']:.4f}")
    first = doc["trees"][0]["nodes"][0]
    print(f"root node of tree 0: {first}")
