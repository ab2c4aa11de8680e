"""Experiment drivers: seeded repetition sweeps and their CSV/JSON artifacts.

Every driver consumes an :class:`ExperimentSpec`, runs seeded allocation
repetitions sequentially (repetition ``r`` always uses the derived seed
``(base_seed, r)``, so results are independent of execution order and of how
many repetitions run), and returns rows ready for :func:`write_csv`.

CSV files produced here are plain ``csv`` dialect with ``#``-prefixed comment
lines above the header (column documentation) and, for drivers with summary
statistics, below the data rows.  :func:`read_csv` parses them back without
loss, so every artifact round-trips through this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

import csv

import numpy as np

from .allocator import AllocationConfig, AllocationResult, run_allocation
from .errors import InvalidInputError
from .hamiltonians import BUILTIN_NAMES, load_builtin
from .ledger import EstimateReport
from .pauli import GroupCover, Observable, build_group_cover, load_observable
from .posterior import MomentConfig, MomentEngine
from .simulator import (
    DEFAULT_MAX_QUBITS,
    StateVector,
    exact_mean,
    exact_theta,
    ground_energy,
    ground_state,
    load_state_file,
)

__all__ = [
    "CsvDocument",
    "ExperimentSpec",
    "calibrate_rows",
    "curve_rows",
    "double_usage_rows",
    "read_csv",
    "reference_report",
    "resolve_observable",
    "resolve_state",
    "run_repetitions",
    "write_csv",
]

GROUND_STATE_SOURCE = "ground-state"

_BACKENDS = ("quadrature", "mcmc")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one experiment command.

    ``observable_source`` is a file path or ``builtin:<name>`` with name in
    BUILTIN_NAMES; ``state_source`` is ``ground-state`` or an amplitude-file
    path.  ``budgets`` are effective-shot caps, strictly increasing.
    """

    observable_source: str
    budgets: tuple[int, ...]
    repetitions: int
    state_source: str = GROUND_STATE_SOURCE
    enable_double: bool = True
    base_seed: int = 0
    backend: str = "quadrature"
    output_path: str | None = None
    max_qubits: int = DEFAULT_MAX_QUBITS

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if self.repetitions < 1:
            raise InvalidInputError(
                f"repetitions must be >= 1, got {self.repetitions}"
            )
        if not self.budgets:
            raise InvalidInputError("at least one budget is required")
        if any(b < 1 for b in self.budgets):
            raise InvalidInputError(f"budgets must be >= 1, got {self.budgets}")
        if any(b >= c for b, c in zip(self.budgets, self.budgets[1:])):
            raise InvalidInputError(
                f"budgets must be strictly increasing, got {self.budgets}"
            )
        if self.backend not in _BACKENDS:
            raise InvalidInputError(
                f"backend must be one of {_BACKENDS}, got {self.backend!r}"
            )

    def moment_config(self) -> MomentConfig:
        return MomentConfig(backend=self.backend)


def resolve_observable(source: str) -> Observable:
    """Load an observable from ``builtin:<name>`` or a file path."""
    if source.startswith("builtin:"):
        return load_builtin(source[len("builtin:") :])
    return load_observable(source)


def resolve_state(
    source: str, obs: Observable, max_qubits: int = DEFAULT_MAX_QUBITS
) -> StateVector:
    """Resolve ``ground-state`` (of *obs*) or an amplitude file."""
    if source == GROUND_STATE_SOURCE:
        return ground_state(obs, max_qubits)
    state = load_state_file(source, width=obs.width)
    return state


def cover_for(obs: Observable) -> GroupCover:
    """Group cover for *obs*; a pure-identity observable gets an empty cover.

    With no measurable terms the allocation loop takes zero shots and the
    estimate degenerates to the identity offset with zero variance.
    """
    if obs.num_terms == 0:
        return GroupCover(groups=(), membership=())
    return build_group_cover(obs)


def rep_seed(base_seed: int, rep: int) -> tuple[int, int]:
    """Derived seed for repetition *rep*: entropy pair fed to the PCG64 rng."""
    return (int(base_seed), int(rep))


def run_repetitions(
    obs: Observable,
    state: StateVector,
    cover: GroupCover,
    budget: int,
    repetitions: int,
    enable_double: bool,
    base_seed: int,
    moments: MomentConfig,
    max_qubits: int = DEFAULT_MAX_QUBITS,
    engine: MomentEngine | None = None,
) -> list[AllocationResult]:
    """Run seeded repetitions sequentially, ordered by repetition index.

    A shared moment engine (caches keyed by tally values only) makes
    repetitions after the first substantially cheaper without affecting
    any result.
    """
    if engine is None:
        engine = MomentEngine(moments)
    results = []
    for rep in range(repetitions):
        config = AllocationConfig(
            budget=budget,
            enable_double=enable_double,
            moments=moments,
            seed=rep_seed(base_seed, rep),
            max_qubits=max_qubits,
        )
        results.append(run_allocation(obs, state, cover, config, engine=engine))
    return results


# ---------------------------------------------------------------------------
# CSV document model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvDocument:
    """A CSV file with comment banners: lossless read/write round-trip."""

    fieldnames: tuple[str, ...]
    rows: tuple[dict, ...]
    top_comments: tuple[str, ...] = ()
    bottom_comments: tuple[str, ...] = ()

    def comment_value(self, key: str) -> str:
        """Value of a ``key = value`` bottom-comment entry."""
        for line in self.bottom_comments + self.top_comments:
            parts = line.split("=", 1)
            if len(parts) == 2 and parts[0].strip() == key:
                return parts[1].strip()
        raise KeyError(key)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(doc: CsvDocument, path) -> None:
    out = StringIO()
    for line in doc.top_comments:
        out.write(f"# {line}\n")
    writer = csv.DictWriter(out, fieldnames=list(doc.fieldnames))
    writer.writeheader()
    for row in doc.rows:
        writer.writerow({k: _format_cell(v) for k, v in row.items()})
    for line in doc.bottom_comments:
        out.write(f"# {line}\n")
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def read_csv(path) -> CsvDocument:
    top: list[str] = []
    bottom: list[str] = []
    data_lines: list[str] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if raw.startswith("#"):
            stripped = raw[1:].strip()
            (top if not data_lines else bottom).append(stripped)
        elif raw.strip():
            data_lines.append(raw)
    if not data_lines:
        raise InvalidInputError(f"no CSV header found in {path}")
    reader = csv.DictReader(StringIO("\n".join(data_lines)))
    rows = tuple(dict(r) for r in reader)
    return CsvDocument(
        fieldnames=tuple(reader.fieldnames or ()),
        rows=rows,
        top_comments=tuple(top),
        bottom_comments=tuple(bottom),
    )


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def _scaled_variance(report: EstimateReport) -> float:
    return report.m_eff * report.variance


def curve_rows(spec: ExperimentSpec) -> CsvDocument:
    """Scaled-variance statistics per budget for both allocation arms.

    For every budget and each arm (double scheme allowed / suppressed; when
    *spec* itself disables the double scheme both arms run identically),
    repetitions with paired seeds produce mean and spread of the rescaled
    claimed variance m_eff * variance, the repetition indices of the best
    and worst runs, and the mean rescaled true squared error against the
    exact reference.
    """
    obs = resolve_observable(spec.observable_source)
    state = resolve_state(spec.state_source, obs, spec.max_qubits)
    cover = cover_for(obs)
    truth = exact_mean(obs, state)
    moments = spec.moment_config()
    rows = []
    for arm_name, arm_double in (("double_on", True), ("double_off", False)):
        engine = MomentEngine(moments)
        for budget in spec.budgets:
            results = run_repetitions(
                obs,
                state,
                cover,
                budget,
                spec.repetitions,
                enable_double=arm_double and spec.enable_double,
                base_seed=spec.base_seed,
                moments=moments,
                max_qubits=spec.max_qubits,
                engine=engine,
            )
            scaled = np.array([_scaled_variance(r.report) for r in results])
            sq_err = np.array(
                [r.report.m_eff * (r.report.mean - truth) ** 2 for r in results]
            )
            rows.append(
                {
                    "budget": budget,
                    "arm": arm_name,
                    "repetitions": spec.repetitions,
                    "mean_scaled_variance": float(scaled.mean()),
                    "rms_scaled_variance": float(
                        np.sqrt(((scaled - scaled.mean()) ** 2).mean())
                    ),
                    "best_rep": int(np.argmin(scaled)),
                    "worst_rep": int(np.argmax(scaled)),
                    "mean_scaled_sq_error": float(sq_err.mean()),
                }
            )
    return CsvDocument(
        fieldnames=(
            "budget",
            "arm",
            "repetitions",
            "mean_scaled_variance",
            "rms_scaled_variance",
            "best_rep",
            "worst_rep",
            "mean_scaled_sq_error",
        ),
        rows=tuple(rows),
        top_comments=(
            "scaled-variance curve: one row per (budget, arm)",
            "budget: effective-shot cap m_eff for the allocation run",
            "arm: double_on allows pair-copy shots, double_off suppresses them",
            "mean/rms_scaled_variance: mean and spread over repetitions of"
            " m_eff * claimed variance",
            "best_rep/worst_rep: repetition index with smallest/largest"
            " scaled claimed variance",
            "mean_scaled_sq_error: mean over repetitions of m_eff *"
            " (estimate - exact mean)^2",
            f"observable = {spec.observable_source}",
            f"state = {spec.state_source}",
            f"base_seed = {spec.base_seed}",
            f"backend = {spec.backend}",
            f"enable_double = {spec.enable_double}",
        ),
    )


def calibrate_rows(spec: ExperimentSpec, budget: int | None = None) -> CsvDocument:
    """Per-repetition z-scores against the exact mean at one fixed budget.

    z = (estimate - exact mean) / sqrt(claimed variance).  Rows with zero
    claimed variance but a nonzero residual are flagged and excluded from
    the summary statistics in the bottom comments.
    """
    if budget is None:
        budget = spec.budgets[-1]
    obs = resolve_observable(spec.observable_source)
    state = resolve_state(spec.state_source, obs, spec.max_qubits)
    cover = cover_for(obs)
    truth = exact_mean(obs, state)
    moments = spec.moment_config()
    results = run_repetitions(
        obs,
        state,
        cover,
        budget,
        spec.repetitions,
        enable_double=spec.enable_double,
        base_seed=spec.base_seed,
        moments=moments,
        max_qubits=spec.max_qubits,
    )
    rows = []
    z_values = []
    flagged_count = 0
    for rep, result in enumerate(results):
        report = result.report
        residual = report.mean - truth
        flagged = False
        if report.variance > 0.0:
            z = residual / math.sqrt(report.variance)
        elif residual == 0.0:
            z = 0.0
        else:
            z = math.nan
            flagged = True
            flagged_count += 1
        if not flagged:
            z_values.append(z)
        rows.append(
            {
                "rep": rep,
                "m": report.m,
                "m_double": report.m_double,
                "estimate": report.mean,
                "claimed_variance": report.variance,
                "z_score": z,
                "flagged": int(flagged),
            }
        )
    z_arr = np.array(z_values) if z_values else np.zeros(0)
    mean_z = float(z_arr.mean()) if z_arr.size else math.nan
    rms_z = float(np.sqrt((z_arr**2).mean())) if z_arr.size else math.nan
    return CsvDocument(
        fieldnames=(
            "rep",
            "m",
            "m_double",
            "estimate",
            "claimed_variance",
            "z_score",
            "flagged",
        ),
        rows=tuple(rows),
        top_comments=(
            "calibration: one z-score per repetition at a fixed budget",
            "z_score = (estimate - exact mean) / sqrt(claimed variance)",
            "flagged = 1 marks zero claimed variance with nonzero residual",
            f"observable = {spec.observable_source}",
            f"state = {spec.state_source}",
            f"budget = {budget}",
            f"base_seed = {spec.base_seed}",
            f"backend = {spec.backend}",
            f"enable_double = {spec.enable_double}",
            f"exact_mean = {truth!r}",
        ),
        bottom_comments=(
            f"summary_mean_z = {mean_z!r}",
            f"summary_rms_z = {rms_z!r}",
            f"flagged_rows = {flagged_count}",
        ),
    )


def fit_slope(
    m_values: np.ndarray, m_double_values: np.ndarray
) -> tuple[float, float]:
    """Least-squares line m_double ~ slope * m + intercept."""
    if m_values.size < 2:
        raise InvalidInputError("need at least 2 points for a slope fit")
    slope, intercept = np.polyfit(
        np.asarray(m_values, dtype=float),
        np.asarray(m_double_values, dtype=float),
        1,
    )
    return float(slope), float(intercept)


def double_usage_rows(
    spec: ExperimentSpec,
    fit_min: int = 20,
    fit_max: int | None = None,
) -> CsvDocument:
    """Pair-copy usage m_double as a function of m, averaged over repetitions.

    Runs the largest budget in *spec* once per repetition, averages the
    per-step (m, m_double) trajectories over repetitions (up to the largest
    m reached by every repetition), and fits a least-squares slope over the
    window fit_min < m <= fit_max (fit_max defaults to the common maximum).
    """
    obs = resolve_observable(spec.observable_source)
    state = resolve_state(spec.state_source, obs, spec.max_qubits)
    cover = cover_for(obs)
    moments = spec.moment_config()
    results = run_repetitions(
        obs,
        state,
        cover,
        spec.budgets[-1],
        spec.repetitions,
        enable_double=spec.enable_double,
        base_seed=spec.base_seed,
        moments=moments,
        max_qubits=spec.max_qubits,
    )
    # Every action advances m by exactly 1, so step k of any trace has
    # m = k + 1 and trajectories align by index.
    common_m = min(len(r.trace) for r in results)
    md = np.array(
        [[r.trace[k].m_double for k in range(common_m)] for r in results],
        dtype=float,
    )
    md_mean = md.mean(axis=0)
    m_values = np.arange(1, common_m + 1)
    window_top = common_m if fit_max is None else min(fit_max, common_m)
    window = (m_values > fit_min) & (m_values <= window_top)
    if window.sum() >= 2:
        slope, intercept = fit_slope(m_values[window], md_mean[window])
    else:
        slope, intercept = math.nan, math.nan
    rows = tuple(
        {
            "m": int(m_values[k]),
            "mean_m_double": float(md_mean[k]),
            "repetitions": len(results),
        }
        for k in range(common_m)
    )
    return CsvDocument(
        fieldnames=("m", "mean_m_double", "repetitions"),
        rows=rows,
        top_comments=(
            "pair-copy usage: mean m_double after each total-shot count m",
            "m: total shots taken (every action advances m by 1)",
            "mean_m_double: average over repetitions of pair-copy shots"
            " among the first m",
            f"observable = {spec.observable_source}",
            f"state = {spec.state_source}",
            f"budget = {spec.budgets[-1]}",
            f"base_seed = {spec.base_seed}",
            f"backend = {spec.backend}",
            f"enable_double = {spec.enable_double}",
        ),
        bottom_comments=(
            f"fit_slope = {slope!r}",
            f"fit_intercept = {intercept!r}",
            f"fit_window_min_exclusive = {fit_min}",
            f"fit_window_max_inclusive = {window_top}",
        ),
    )


def trace_document(result: AllocationResult, spec_note: str = "") -> CsvDocument:
    """Per-action trace of one allocation run as a CSV document."""
    rows = tuple(
        {
            "step": t.step,
            "kind": t.kind,
            "group": "" if t.group is None else t.group,
            "predicted_variance": t.predicted_variance,
            "realized_variance": t.realized_variance,
            "m": t.m,
            "m_double": t.m_double,
        }
        for t in result.trace
    )
    top = (
        "allocation trace: one row per executed action",
        "kind: 'group' (one-copy commuting-group shot) or 'double'"
        " (two-copy pair shot)",
        "group: cover index of the measured group (empty for double shots)",
        "predicted_variance: claimed variance the chooser expected after"
        " the action",
        "realized_variance: claimed variance after recording the outcome",
    )
    if spec_note:
        top = top + (spec_note,)
    return CsvDocument(
        fieldnames=(
            "step",
            "kind",
            "group",
            "predicted_variance",
            "realized_variance",
            "m",
            "m_double",
        ),
        rows=rows,
        top_comments=top,
    )


def reference_report(
    obs: Observable,
    state: StateVector,
    state_source: str = GROUND_STATE_SOURCE,
    max_qubits: int = DEFAULT_MAX_QUBITS,
) -> dict:
    """Exact quantities for calibration: mean, per-term probabilities, energy."""
    terms = []
    for index, term in enumerate(obs.terms):
        theta = exact_theta(state, term.string)
        terms.append(
            {
                "index": index,
                "string": str(term.string),
                "coefficient": term.coefficient,
                "theta": theta,
                "phi": theta * theta + (1.0 - theta) * (1.0 - theta),
            }
        )
    return {
        "exact_mean": exact_mean(obs, state),
        "ground_state_energy": ground_energy(obs, max_qubits),
        "identity_offset": obs.identity_offset,
        "num_terms": obs.num_terms,
        "state_source": state_source,
        "terms": terms,
    }


def write_json(payload: dict, path) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, allow_nan=True) + "\n", encoding="utf-8"
    )


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
