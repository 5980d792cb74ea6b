"""Stage losses for the three-pass cascade, with analytic derivatives.

Stage 1 is plain mean squared error on historical rows.  Stage 2 adds a
weekly sum constraint: each week's predictions should add up to that week's
category total, so every row's gradient picks up its week's residual.
Stage 3 keeps the constraint term and swaps the fit term for a pull toward
share-preserving targets (each row's share of its week's stage-1 prediction
mass, rescaled to the category total).

All losses carry their 1/m or 1/n normalization inside the gradients, and
the coupled constraint term is differentiated with a diagonal Hessian (the
-2/n cross terms between same-week rows are dropped, as the per-row
grad/hess contract requires).  Every function here is pure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRatioError, ValidationError
from .gbdt import GradHess
from .panel import GroupLayout, PanelDataset


class StageKind(enum.Enum):
    STAGE1 = "stage1"
    STAGE2 = "stage2"
    STAGE3 = "stage3"


@dataclass(frozen=True)
class StageTargets:
    """Training targets for one stage.

    Stage 1 targets are the m historical actuals.  Stage 2 targets cover
    all n rows: actuals first, then stage-1 predictions as pseudo-labels.
    Stage 3 targets are the rescaled-share values, also length n.
    """

    values: np.ndarray
    kind: StageKind

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValidationError(f"targets must be a vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("targets contain non-finite values")


@dataclass(frozen=True)
class RatioVector:
    """Per-row share of the week's total stage-1 prediction mass.

    Shares of one week sum to 1 (within float tolerance); scaling a week's
    predictions by any positive constant leaves them unchanged.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)

    @classmethod
    def validated(cls, values: np.ndarray, layout: GroupLayout) -> "RatioVector":
        rv = cls(values)
        sums = layout.weekly_sums(rv.values)
        bad = np.nonzero(np.abs(sums - 1.0) > 1e-9)[0]
        if bad.size:
            w = int(layout.weeks[bad[0]])
            raise ValidationError(
                f"week {w}: ratios sum to {sums[bad[0]]!r}, expected 1"
            )
        return rv


def _layout(data: PanelDataset | GroupLayout) -> GroupLayout:
    return data.layout if isinstance(data, PanelDataset) else data


def _check_kind(targets: StageTargets, kind: StageKind) -> np.ndarray:
    if targets.kind is not kind:
        raise ValidationError(f"expected {kind.value} targets, got {targets.kind.value}")
    return targets.values


def _check_lengths(t: np.ndarray, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != t.shape:
        raise ValidationError(f"targets have shape {t.shape}, predictions {p.shape}")
    return p


# ---------------------------------------------------------------------------
# stage 1: mean squared error on the m historical rows

def stage1_loss(targets: StageTargets, preds: np.ndarray) -> float:
    t = _check_kind(targets, StageKind.STAGE1)
    p = _check_lengths(t, preds)
    r = t - p
    return float(np.mean(r * r))


def stage1_gradhess(targets: StageTargets, preds: np.ndarray) -> GradHess:
    t = _check_kind(targets, StageKind.STAGE1)
    p = _check_lengths(t, preds)
    m = t.shape[0]
    grad = -2.0 * (t - p) / m
    hess = np.full(m, 2.0 / m)
    return GradHess(grad, hess)


# ---------------------------------------------------------------------------
# stage 2: squared error against pseudo-labeled targets + weekly sum penalty
#
# loss = (1/n) sum_i (t_i - p_i)^2 + (1/n) sum_w R_w^2,
# R_w = category_total_w - sum of week w's predictions.

def stage2_loss(
    data: PanelDataset | GroupLayout, targets: StageTargets, preds: np.ndarray
) -> float:
    layout = _layout(data)
    t = _check_kind(targets, StageKind.STAGE2)
    p = _check_lengths(t, preds)
    if t.shape[0] != layout.n:
        raise ValidationError(f"expected {layout.n} targets, got {t.shape[0]}")
    r = t - p
    R = layout.residuals(p)
    return float((np.sum(r * r) + np.sum(R * R)) / layout.n)


def stage2_gradhess(
    data: PanelDataset | GroupLayout, targets: StageTargets, preds: np.ndarray
) -> GradHess:
    layout = _layout(data)
    t = _check_kind(targets, StageKind.STAGE2)
    p = _check_lengths(t, preds)
    n = layout.n
    R_rows = layout.expand(layout.residuals(p))
    grad = (-2.0 * (t - p) - 2.0 * R_rows) / n
    hess = np.full(n, 4.0 / n)
    return GradHess(grad, hess)


# ---------------------------------------------------------------------------
# stage-1 share ratios and the stage-3 targets they induce

def pred_ratio(
    stage1_preds: np.ndarray, data: PanelDataset | GroupLayout
) -> RatioVector:
    """Each row's share of its week's summed stage-1 prediction.

    A week whose predictions sum to (near) zero has no meaningful shares;
    the tolerance scales with the week's typical prediction magnitude.
    """
    layout = _layout(data)
    p = np.asarray(stage1_preds, dtype=np.float64)
    if p.shape != (layout.n,):
        raise ValidationError(f"expected {layout.n} predictions, got shape {p.shape}")
    sums = layout.weekly_sums(p)
    scale = layout.weekly_sums(np.abs(p)) / layout.counts
    eps = 1e-9 * (scale + 1.0)
    bad = np.nonzero(np.abs(sums) < eps)[0]
    if bad.size:
        w = int(layout.weeks[bad[0]])
        raise DegenerateRatioError(
            f"week {w}: stage-1 predictions sum to {sums[bad[0]]!r}, "
            "cannot form shares"
        )
    return RatioVector(p / layout.expand(sums))


def stage3_target(
    ratios: RatioVector, data: PanelDataset | GroupLayout
) -> StageTargets:
    """Rescale each week's shares to its category total.

    Because a week's ratios sum to 1, its targets sum to the category total
    identically — the fine-tuning targets are constraint-consistent by
    construction.
    """
    layout = _layout(data)
    values = ratios.values * layout.expand(layout.totals)
    return StageTargets(values=values, kind=StageKind.STAGE3)


# ---------------------------------------------------------------------------
# stage 3: weekly sum penalty + squared pull toward the rescaled-share targets

def stage3_loss(
    data: PanelDataset | GroupLayout, targets: StageTargets, preds: np.ndarray
) -> float:
    layout = _layout(data)
    t = _check_kind(targets, StageKind.STAGE3)
    p = _check_lengths(t, preds)
    if t.shape[0] != layout.n:
        raise ValidationError(f"expected {layout.n} targets, got {t.shape[0]}")
    R = layout.residuals(p)
    d = p - t
    return float((np.sum(R * R) + np.sum(d * d)) / layout.n)


def stage3_gradhess(
    data: PanelDataset | GroupLayout, targets: StageTargets, preds: np.ndarray
) -> GradHess:
    layout = _layout(data)
    t = _check_kind(targets, StageKind.STAGE3)
    p = _check_lengths(t, preds)
    n = layout.n
    R_rows = layout.expand(layout.residuals(p))
    grad = (-2.0 * R_rows + 2.0 * (p - t)) / n
    hess = np.full(n, 4.0 / n)
    return GradHess(grad, hess)


# ---------------------------------------------------------------------------
# constraint term in isolation (used by the trivial-solution probe)

def constraint_only_loss(data: PanelDataset | GroupLayout, preds: np.ndarray) -> float:
    layout = _layout(data)
    p = np.asarray(preds, dtype=np.float64)
    R = layout.residuals(p)
    return float(np.sum(R * R) / layout.n)


def constraint_only_gradhess(
    data: PanelDataset | GroupLayout, preds: np.ndarray
) -> GradHess:
    layout = _layout(data)
    p = np.asarray(preds, dtype=np.float64)
    if p.shape != (layout.n,):
        raise ValidationError(f"expected {layout.n} predictions, got shape {p.shape}")
    n = layout.n
    R_rows = layout.expand(layout.residuals(p))
    grad = -2.0 * R_rows / n
    hess = np.full(n, 2.0 / n)
    return GradHess(grad, hess)


# ---------------------------------------------------------------------------
# engine-facing objective wrappers

@dataclass(frozen=True)
class Stage1Objective:
    """Mean squared error over historical rows."""

    targets: StageTargets

    def __post_init__(self) -> None:
        _check_kind(self.targets, StageKind.STAGE1)

    def base_score(self) -> float:
        return float(np.mean(self.targets.values))

    def loss(self, preds: np.ndarray) -> float:
        return stage1_loss(self.targets, preds)

    def grad_hess(self, preds: np.ndarray) -> GradHess:
        return stage1_gradhess(self.targets, preds)


@dataclass(frozen=True)
class Stage2Objective:
    """Pseudo-labeled squared error plus the weekly sum penalty."""

    layout: GroupLayout
    targets: StageTargets

    def __post_init__(self) -> None:
        _check_kind(self.targets, StageKind.STAGE2)

    def base_score(self) -> float:
        return float(np.mean(self.targets.values))

    def loss(self, preds: np.ndarray) -> float:
        return stage2_loss(self.layout, self.targets, preds)

    def grad_hess(self, preds: np.ndarray) -> GradHess:
        return stage2_gradhess(self.layout, self.targets, preds)


@dataclass(frozen=True)
class Stage3Objective:
    """Weekly sum penalty plus the pull toward rescaled-share targets."""

    layout: GroupLayout
    targets: StageTargets

    def __post_init__(self) -> None:
        _check_kind(self.targets, StageKind.STAGE3)

    def base_score(self) -> float:
        return float(np.mean(self.targets.values))

    def loss(self, preds: np.ndarray) -> float:
        return stage3_loss(self.layout, self.targets, preds)

    def grad_hess(self, preds: np.ndarray) -> GradHess:
        return stage3_gradhess(self.layout, self.targets, preds)


@dataclass(frozen=True)
class ConstraintOnlyObjective:
    """Weekly sum penalty alone; minimized by the per-week constant
    total/count when features cannot tell same-week rows apart.  There are
    no per-row targets, so the ensemble starts from zero."""

    layout: GroupLayout

    def base_score(self) -> float:
        return 0.0

    def loss(self, preds: np.ndarray) -> float:
        return constraint_only_loss(self.layout, preds)

    def grad_hess(self, preds: np.ndarray) -> GradHess:
        return constraint_only_gradhess(self.layout, preds)
