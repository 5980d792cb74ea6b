import numpy as np
import pytest

from triboost.panel import PanelDataset, PanelRecord
from triboost.pipeline import run_pipeline
from triboost.scenario import ScenarioConfig, generate

BIAS_LEVELS = (0.0, 0.15, 0.30)


def make_panel(week_sales, future_weeks=None, num_features=2, seed=0):
    """Small hand-rolled panel for unit tests.

    ``week_sales``: {week_index: [sales per product]} — historical weeks.
    ``future_weeks``: {week_index: (count, category_total)}.
    Features are deterministic pseudo-random values.
    """
    rng = np.random.default_rng(seed)
    records = []
    for week in sorted(week_sales):
        for p, sales in enumerate(week_sales[week]):
            records.append(
                PanelRecord(
                    product_id=f"P{p}",
                    week_index=week,
                    features=rng.normal(size=num_features),
                    actual_sales=float(sales),
                )
            )
    future_totals = {}
    for week in sorted(future_weeks or {}):
        count, total = future_weeks[week]
        future_totals[week] = float(total)
        for p in range(count):
            records.append(
                PanelRecord(
                    product_id=f"P{p}",
                    week_index=week,
                    features=rng.normal(size=num_features),
                    actual_sales=None,
                )
            )
    names = [f"f_{j}" for j in range(num_features)]
    return PanelDataset.from_records(records, names, future_totals)


def random_panel(rng):
    """Random panel with 3-10 weeks and n <= 50 rows: at least one
    historical and one future week, 1-5 products per week."""
    weeks = int(rng.integers(3, 11))
    hist_weeks = int(rng.integers(1, weeks))
    week_sales = {}
    future_weeks = {}
    for w in range(weeks):
        count = int(rng.integers(1, 6))
        if w < hist_weeks:
            week_sales[w] = rng.uniform(1.0, 30.0, size=count).tolist()
        else:
            future_weeks[w] = (count, float(rng.uniform(5.0, 120.0)))
    return make_panel(week_sales, future_weeks, seed=int(rng.integers(2**31)))


@pytest.fixture(scope="session")
def default_dataset():
    dataset, _ = generate(ScenarioConfig())
    return dataset


@pytest.fixture(scope="session")
def default_truth():
    _, truth = generate(ScenarioConfig())
    return truth


@pytest.fixture(scope="session")
def bias_sweep():
    """(dataset, PipelineResult) per bias level — shared by the comparative
    and monotonicity tests, which are the expensive ones."""
    out = {}
    for bias in BIAS_LEVELS:
        dataset, _ = generate(ScenarioConfig(stage1_bias_injection=bias))
        out[bias] = (dataset, run_pipeline(dataset))
    return out


@pytest.fixture(scope="session")
def default_result(bias_sweep):
    return bias_sweep[0.15][1]
