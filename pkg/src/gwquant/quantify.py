"""Probabilistic state quantification from incoming test DI values.

Trained GP models map states to DI values; inspection works the other way
round: a test DI arrives and the structural state must be inferred. The
probability that a test DI y* originates from candidate state x is the
predictive-CDF mass

    P(x* = x) = F(b; E{y|x}, V{y|x}) - F(a; E{y|x}, V{y|x})
    a, b      = y* -/+ 2 sqrt(V{y_closest})

where y_closest is the training target nearest to y* in absolute value and
V{y_closest} the model's predictive variance at that training row's inputs.
The candidate grid defaults to the unique training states.

Simultaneous damage-size + load prediction runs in two steps over a model
trained with the two reference-signal classes and a switch covariate:
class-1 test DIs (one per reference load) vote over the full damage x load
grid with switch ``1`` and only the damage estimate is accepted; a class-2
test DI referenced to the unloaded signal at that damage then selects the
load with switch ``2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import (
    CovariateMismatchError,
    DimensionMismatchError,
    InvalidArgumentError,
    MissingBaselineError,
)

DEFAULT_LOW_CONFIDENCE_THRESHOLD = 0.05

_CANONICAL_COLUMNS = ("damage", "load", "switch")


@dataclass
class StateGrid:
    """Candidate states: (damage,) or (damage, load) tuples, sorted."""

    states: list[tuple]
    source: str = "training"

    def __post_init__(self):
        if not self.states:
            raise InvalidArgumentError("state grid must be non-empty")
        widths = {len(s) for s in self.states}
        if len(widths) != 1 or widths.pop() not in (1, 2):
            raise InvalidArgumentError("states must all be 1- or 2-tuples")
        states = [tuple(float(v) for v in s) for s in self.states]
        if not all(np.isfinite(v) for s in states for v in s):
            raise InvalidArgumentError("state values must be finite")
        self.states = sorted(set(states))

    @classmethod
    def from_training_inputs(cls, inputs, include_load: bool | None = None) -> "StateGrid":
        """Unique training states; load column included when present."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if include_load is None:
            include_load = inputs.shape[1] >= 2
        cols = 2 if include_load and inputs.shape[1] >= 2 else 1
        return cls([tuple(row) for row in inputs[:, :cols]])

    def refine(self, k: int) -> "StateGrid":
        """Insert k interpolated damage values between adjacent grid damages."""
        if k <= 0:
            return StateGrid(list(self.states), self.source)
        width = len(self.states[0])
        by_load: dict[tuple, list[float]] = {}
        for s in self.states:
            by_load.setdefault(s[1:], []).append(s[0])
        states = []
        for rest, damages in by_load.items():
            damages = sorted(set(damages))
            refined = []
            for lo, hi in zip(damages, damages[1:]):
                refined.extend(np.linspace(lo, hi, k + 2)[:-1])
            refined.append(damages[-1])
            states.extend(tuple([d, *rest]) for d in refined)
        return StateGrid(states, source=f"{self.source}+refined")


@dataclass
class StateProbabilityTable:
    """Per-candidate-state probabilities for one test DI."""

    entries: list[tuple[tuple, float]]
    test_di: float
    closest_training_di: float
    closest_variance: float
    argmax_state: tuple
    low_confidence: bool = False

    def probability(self, state: tuple) -> float:
        state = tuple(float(v) for v in state)
        for s, p in self.entries:
            if s == state:
                return p
        raise KeyError(state)

    @property
    def max_probability(self) -> float:
        return max(p for _, p in self.entries)


@dataclass
class TwoStepPrediction:
    predicted_damage: float
    predicted_load: float
    step1_table: StateProbabilityTable
    step2_table: StateProbabilityTable
    step1_reference_load: float


@dataclass
class BoxStats:
    """Tukey box-plot summary of the argmax predictions at one true state."""

    state: tuple
    median: float
    q25: float
    q75: float
    lo_whisker: float
    hi_whisker: float
    outliers: list[float] = field(default_factory=list)


@dataclass
class ErrorRecord:
    true_damage: float
    true_load: float | None
    pred_damage: float
    pred_load: float | None
    err_damage: float
    err_load: float | None


@dataclass
class SummaryReport:
    boxes: list[BoxStats]
    errors: list[ErrorRecord]


def gaussian_cdf(s, mean, variance):
    """Gaussian CDF at s, computed through the complementary error function.

    Broadcasts over array arguments; returns a float for all-scalar input.
    """
    if np.any(np.asarray(variance) <= 0):
        raise InvalidArgumentError("variance must be > 0")
    z = (np.asarray(s, dtype=float) - mean) / np.sqrt(variance)
    out = 0.5 * erfc(-z / np.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def _query_matrix(grid: StateGrid, fixed_covariates, ndim: int) -> np.ndarray:
    """Assemble model queries over canonical columns damage, load, switch."""
    fixed = dict(fixed_covariates or {})
    unknown = set(fixed) - set(_CANONICAL_COLUMNS)
    if unknown:
        raise CovariateMismatchError(f"unknown fixed covariates {sorted(unknown)}")
    state_width = len(grid.states[0])
    rows = np.empty((len(grid.states), ndim))
    for i, state in enumerate(grid.states):
        values = {"damage": state[0]}
        if state_width > 1:
            values["load"] = state[1]
        for name, value in fixed.items():
            if name in values:
                raise CovariateMismatchError(
                    f"covariate {name!r} is fixed but already present in the grid"
                )
            values[name] = float(value)
        needed = _CANONICAL_COLUMNS[:ndim]
        missing = [c for c in needed if c not in values]
        if missing:
            raise CovariateMismatchError(
                f"model expects covariates {list(needed)}; missing {missing}"
            )
        extra = [c for c in values if c not in needed]
        if extra:
            raise CovariateMismatchError(
                f"covariates {extra} not used by a {ndim}-input model"
            )
        rows[i] = [values[c] for c in needed]
    return rows


def _closest_training_point(model, test_di: float, switch: float | None = None):
    """Nearest training target by absolute difference, ties to smaller index.

    With a fixed switch covariate the search stays within that reference
    class, so the other class's predictive moments are never read.
    """
    targets = np.asarray(model.train_targets, dtype=float).ravel()
    rows = np.arange(targets.size)
    if switch is not None and model.ndim >= 3:
        rows = rows[np.asarray(model.train_inputs)[:, 2] == switch]
        if rows.size == 0:
            raise CovariateMismatchError(f"no training rows with switch={switch:g}")
    idx = int(rows[np.argmin(np.abs(targets[rows] - test_di))])
    variance = float(model.predict(model.train_inputs[idx : idx + 1]).variance[0])
    return float(targets[idx]), variance


def state_probabilities(
    model,
    grid: StateGrid,
    test_di: float,
    fixed_covariates: dict | None = None,
    low_confidence_threshold: float = DEFAULT_LOW_CONFIDENCE_THRESHOLD,
) -> StateProbabilityTable:
    """Probability that the test DI originates from each candidate state.

    The argmax breaks ties toward smaller damage, then smaller load. A table
    whose best probability falls below low_confidence_threshold is flagged.
    """
    test_di = float(test_di)
    if not np.isfinite(test_di):
        raise InvalidArgumentError("test_di must be finite")
    queries = _query_matrix(grid, fixed_covariates, model.ndim)
    switch = (fixed_covariates or {}).get("switch")
    y_closest, v_closest = _closest_training_point(model, test_di, switch)
    half_width = 2.0 * np.sqrt(v_closest)
    a, b = test_di - half_width, test_di + half_width

    moments = model.predict(queries)
    probs = gaussian_cdf(b, moments.mean, moments.variance) - gaussian_cdf(
        a, moments.mean, moments.variance
    )
    probs = np.clip(probs, 0.0, 1.0)

    entries = list(zip(grid.states, (float(p) for p in probs)))
    # grid states are sorted, so ties resolve toward smaller damage then load
    best = max(
        range(len(entries)),
        key=lambda i: (entries[i][1], tuple(-v for v in entries[i][0])),
    )
    return StateProbabilityTable(
        entries=entries,
        test_di=test_di,
        closest_training_di=y_closest,
        closest_variance=v_closest,
        argmax_state=entries[best][0],
        low_confidence=entries[best][1] < low_confidence_threshold,
    )


def predict_single_state(
    model,
    grid: StateGrid,
    test_di: float,
    known_load: float | None = None,
    low_confidence_threshold: float = DEFAULT_LOW_CONFIDENCE_THRESHOLD,
) -> StateProbabilityTable:
    """Damage-size quantification over a damage-only grid."""
    if any(len(s) != 1 for s in grid.states):
        raise InvalidArgumentError("predict_single_state expects a damage-only grid")
    fixed = {}
    if known_load is not None:
        fixed["load"] = float(known_load)
    return state_probabilities(model, grid, test_di, fixed, low_confidence_threshold)


def predict_two_states(
    model,
    class1_test_dis: list[tuple[float, float]],
    class2_di_provider,
    damage_grid,
    load_grid,
    low_confidence_threshold: float = DEFAULT_LOW_CONFIDENCE_THRESHOLD,
) -> TwoStepPrediction:
    """Two-step simultaneous damage-size and load prediction.

    class1_test_dis holds (reference_load, di) pairs, one per class-1
    reference; class2_di_provider(damage) returns the test DI referenced to
    the unloaded signal at that damage and may raise KeyError when absent.
    """
    if model.ndim != 3:
        raise CovariateMismatchError(
            "two-state prediction needs a model trained on (damage, load, switch)"
        )
    if not class1_test_dis:
        raise InvalidArgumentError("class1_test_dis must be non-empty")
    damage_grid = [float(d) for d in damage_grid]
    load_grid = [float(w) for w in load_grid]
    if not damage_grid or not load_grid:
        raise InvalidArgumentError("damage and load grids must be non-empty")

    grid = StateGrid([(d, w) for d in damage_grid for w in load_grid])
    best_table = None
    best_ref_load = None
    for ref_load, di in class1_test_dis:
        table = state_probabilities(
            model, grid, di, {"switch": 1.0}, low_confidence_threshold
        )
        if best_table is None or table.max_probability > best_table.max_probability:
            best_table, best_ref_load = table, float(ref_load)
    predicted_damage = best_table.argmax_state[0]

    try:
        class2_di = float(class2_di_provider(predicted_damage))
    except KeyError as exc:
        raise MissingBaselineError(
            f"no class-2 reference DI for predicted damage {predicted_damage:g}"
        ) from exc

    step2_grid = StateGrid([(predicted_damage, w) for w in load_grid])
    step2 = state_probabilities(
        model, step2_grid, class2_di, {"switch": 2.0}, low_confidence_threshold
    )
    return TwoStepPrediction(
        predicted_damage=predicted_damage,
        predicted_load=step2.argmax_state[1],
        step1_table=best_table,
        step2_table=step2,
        step1_reference_load=best_ref_load,
    )


def _quartiles(values: np.ndarray):
    q25, med, q75 = np.percentile(values, [25.0, 50.0, 75.0])
    return float(q25), float(med), float(q75)


def summarize_predictions(true_states: list[tuple], tables: list[StateProbabilityTable]) -> SummaryReport:
    """Box-plot stats of predicted damage per true state plus signed errors.

    Whiskers follow the Tukey convention: the most extreme data points
    within 1.5 IQR of the box edges; everything beyond is an outlier.
    """
    if len(true_states) != len(tables):
        raise DimensionMismatchError("true_states and tables lengths differ")
    groups: dict[tuple, list[float]] = {}
    errors = []
    for true_state, table in zip(true_states, tables):
        true_state = tuple(float(v) for v in true_state)
        pred = table.argmax_state
        groups.setdefault(true_state, []).append(pred[0])
        has_load = len(true_state) > 1 and len(pred) > 1
        errors.append(
            ErrorRecord(
                true_damage=true_state[0],
                true_load=true_state[1] if has_load else None,
                pred_damage=pred[0],
                pred_load=pred[1] if has_load else None,
                err_damage=pred[0] - true_state[0],
                err_load=(pred[1] - true_state[1]) if has_load else None,
            )
        )

    boxes = []
    for state in sorted(groups):
        values = np.array(groups[state])
        q25, med, q75 = _quartiles(values)
        iqr = q75 - q25
        in_lo = values[values >= q25 - 1.5 * iqr]
        in_hi = values[values <= q75 + 1.5 * iqr]
        lo_whisker = float(in_lo.min()) if in_lo.size else q25
        hi_whisker = float(in_hi.max()) if in_hi.size else q75
        outliers = sorted(float(v) for v in values[(values < lo_whisker) | (values > hi_whisker)])
        boxes.append(BoxStats(state, med, q25, q75, lo_whisker, hi_whisker, outliers))
    return SummaryReport(boxes, errors)
