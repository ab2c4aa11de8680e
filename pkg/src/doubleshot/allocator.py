"""Greedy adaptive shot allocation.

Each step hypothesizes every candidate action against the current counts:
a group action adds one expectation-valued single-scheme shot of that group
(term counts split by the posterior mean, joint counts split by the pair
posterior's joint means), a double action adds half an expectation-valued
double-scheme shot to every term and pair (the half encodes its two-shot
cost).  The action whose hypothetical ledger predicts the smallest estimate
variance is executed for real, and the loop repeats until the effective
budget (group shots count 1, double shots 2) cannot fund any action.

The run loop evaluates candidates incrementally: contributions of tallies a
candidate does not touch are reused, and all touched tallies across all
candidates are pushed through the moment engine in one batch.  The decisions
are bit-identical to rebuilding each hypothetical ledger and calling
estimate() on it, which is what virtual_update/choose_action do and what the
tests cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .ledger import (
    EstimateReport,
    TallyLedger,
    clamped_variance,
    estimate,
    joint_mask,
    pair_contributions,
    term_contributions,
)
from .pauli import GroupCover, Observable
from .posterior import DEFAULT_CONFIG, MomentConfig, MomentEngine
from .simulator import (
    DEFAULT_MAX_QUBITS,
    StateVector,
    sample_double_shot,
    sample_group_shot,
)


@dataclass(frozen=True)
class MeasurementAction:
    """One executable choice: measure a cover group once, or one double shot."""

    kind: str
    group: int | None = None

    def __post_init__(self):
        if self.kind == "group":
            if self.group is None or self.group < 0:
                raise InvalidInputError("group action needs a group index")
        elif self.kind == "double":
            if self.group is not None:
                raise InvalidInputError("double action takes no group index")
        else:
            raise InvalidInputError(f"unknown action kind {self.kind!r}")

    @property
    def cost(self) -> int:
        """Effective-budget units consumed: 1 single-copy shot or 2 copies."""
        return 1 if self.kind == "group" else 2


@dataclass(frozen=True)
class AllocationConfig:
    budget: int
    enable_double: bool = True
    moments: MomentConfig = DEFAULT_CONFIG
    seed: int | None = None
    max_qubits: int = DEFAULT_MAX_QUBITS

    def __post_init__(self):
        if self.budget < 1:
            raise InvalidInputError(f"budget must be >= 1, got {self.budget}")


@dataclass(frozen=True)
class TraceRow:
    """One executed action with its predicted and realized variance."""

    step: int
    kind: str
    group: int | None
    predicted_variance: float
    realized_variance: float
    m: int
    m_double: int


@dataclass(frozen=True)
class AllocationResult:
    ledger: TallyLedger
    report: EstimateReport
    trace: tuple[TraceRow, ...] = field(repr=False)


class _GroupIndex:
    """Static index of which tallies one group's virtual shot touches."""

    def __init__(self, ledger: TallyLedger, members):
        self.members = np.asarray(sorted(members), dtype=np.intp)
        mset = set(members)
        k_both, k_i, k_j = [], [], []
        seen = set()
        for t in members:
            for k in ledger.pairs_touching[t].tolist():
                if k in seen:
                    continue
                seen.add(k)
                i, j = ledger.pair_keys[k]
                if i in mset and j in mset:
                    k_both.append(k)
                elif i in mset:
                    k_i.append(k)
                else:
                    k_j.append(k)
        self.touched = np.asarray(k_both + k_i + k_j, dtype=np.intp)
        self.n_both = len(k_both)
        self.n_iside = len(k_i)
        self.iside_terms = np.asarray(
            [ledger.pair_keys[k][0] for k in k_i], dtype=np.intp
        )
        self.jside_terms = np.asarray(
            [ledger.pair_keys[k][1] for k in k_j], dtype=np.intp
        )

    def virtual_rows(self, ledger: TallyLedger, smom, pmom):
        """Hypothetical single and pair rows after one shot of this group."""
        theta = smom[:, 0]
        vs = ledger.singles[self.members].copy()
        th = theta[self.members]
        vs[:, 0] += th
        vs[:, 1] += 1.0 - th
        vp = ledger.pairs[self.touched].copy()
        nb, ni = self.n_both, self.n_iside
        if nb:
            vp[:nb, 0:4] += pmom[self.touched[:nb], 0:4]
        if ni:
            ti = theta[self.iside_terms]
            vp[nb : nb + ni, 8] += ti
            vp[nb : nb + ni, 9] += 1.0 - ti
        if self.jside_terms.size:
            tj = theta[self.jside_terms]
            vp[nb + ni :, 10] += tj
            vp[nb + ni :, 11] += 1.0 - tj
        return vs, vp


def _double_virtual_rows(ledger: TallyLedger, smom, pmom):
    """Hypothetical rows after half an expectation-valued double shot."""
    phi = smom[:, 2]
    vs = ledger.singles.copy()
    vs[:, 2] += 0.5 * phi
    vs[:, 3] += 0.5 * (1.0 - phi)
    vp = ledger.pairs.copy()
    if ledger.num_pairs:
        vp[:, 4:8] += 0.5 * pmom[:, 4:8]
    return vs, vp


def _full_moments(ledger: TallyLedger, engine: MomentEngine):
    smom = engine.single_block(ledger.singles)
    pmom = (
        engine.pair_block(ledger.pairs)
        if ledger.num_pairs
        else np.zeros((0, 11))
    )
    return smom, pmom


def virtual_update(
    ledger: TallyLedger,
    action: MeasurementAction,
    cover: GroupCover,
    engine: MomentEngine,
) -> TallyLedger:
    """Reference hypothetical-ledger builder; the input ledger is untouched.

    Counters are not advanced: the hypothetical ledger only serves variance
    prediction, and its fractional counts do not satisfy the integer-count
    identities that validate() checks on real ledgers.
    """
    smom, pmom = _full_moments(ledger, engine)
    out = ledger.copy()
    if action.kind == "group":
        gi = _GroupIndex(ledger, cover.groups[action.group])
        vs, vp = gi.virtual_rows(ledger, smom, pmom)
        out.singles[gi.members] = vs
        if gi.touched.size:
            out.pairs[gi.touched] = vp
    else:
        vs, vp = _double_virtual_rows(ledger, smom, pmom)
        out.singles = vs
        out.pairs = vp
    return out


def _candidate_actions(
    cover: GroupCover, config: AllocationConfig, remaining: int
) -> list[MeasurementAction]:
    """Candidates in tie-break order: groups by index, then double."""
    actions = [
        MeasurementAction(kind="group", group=g)
        for g in range(cover.num_groups)
    ]
    if config.enable_double and remaining >= 2 and cover.num_groups > 0:
        actions.append(MeasurementAction(kind="double"))
    return actions


def choose_action(
    ledger: TallyLedger,
    obs: Observable,
    cover: GroupCover,
    config: AllocationConfig,
    engine: MomentEngine | None = None,
) -> MeasurementAction:
    """Reference chooser: rebuild every hypothetical ledger and estimate it.

    Ties resolve to the first candidate in order (groups by index, double
    last), so equal predictions prefer the cheaper action.
    """
    remaining = config.budget - ledger.effective_shots
    if remaining < 1:
        raise InvalidInputError("no budget remaining")
    if cover.num_groups == 0:
        raise InvalidInputError("no measurable groups")
    if engine is None:
        engine = MomentEngine(config.moments)
    actions = _candidate_actions(cover, config, remaining)
    best, best_var = None, None
    for action in actions:
        hypo = virtual_update(ledger, action, cover, engine)
        var = estimate(hypo, obs, engine).variance
        if best_var is None or var < best_var:
            best, best_var = action, var
    return best


class _FastLoop:
    """Incremental candidate evaluation sharing one moment engine."""

    def __init__(self, obs: Observable, cover: GroupCover, engine: MomentEngine):
        self.obs = obs
        self.cover = cover
        self.engine = engine
        self.coeff = obs.coefficients()
        self.ledger = TallyLedger(obs)
        self.groups = [
            _GroupIndex(self.ledger, g) for g in cover.groups
        ]
        self.smom = None
        self.pmom = None
        self.term_contrib = None
        self.pair_contrib = None
        self.variance = None

    def refresh(self):
        """Recompute base moments and contributions for the real ledger."""
        led = self.ledger
        self.smom, self.pmom = _full_moments(led, self.engine)
        self.term_contrib = term_contributions(self.coeff, self.smom)
        joint_rows = np.flatnonzero(joint_mask(led.pairs))
        self.pair_contrib = pair_contributions(
            self.coeff, led.pair_i, led.pair_j, led.num_pairs,
            joint_rows, self.pmom[joint_rows],
        )
        self.variance = clamped_variance(
            float(np.sum(self.term_contrib) + np.sum(self.pair_contrib))
        )

    def predict(self, actions: list[MeasurementAction]) -> list[float]:
        """Predicted variance per candidate, batched through the engine."""
        led = self.ledger
        chunks_s, chunks_p, meta = [], [], []
        for action in actions:
            if action.kind == "group":
                gi = self.groups[action.group]
                vs, vp = gi.virtual_rows(led, self.smom, self.pmom)
                meta.append((gi.members, gi.touched))
            else:
                vs, vp = _double_virtual_rows(led, self.smom, self.pmom)
                meta.append(
                    (np.arange(led.num_terms), np.arange(led.num_pairs))
                )
            chunks_s.append(vs)
            chunks_p.append(vp)
        all_s = np.vstack(chunks_s)
        all_p = (
            np.vstack(chunks_p)
            if any(c.shape[0] for c in chunks_p)
            else np.zeros((0, 12))
        )
        ms = self.engine.single_block(all_s)
        mp = self.engine.pair_block(all_p) if all_p.shape[0] else np.zeros((0, 11))

        out = []
        s_at, p_at = 0, 0
        for (members, touched), vs, vp in zip(meta, chunks_s, chunks_p):
            ns, npair = vs.shape[0], vp.shape[0]
            ms_rows = ms[s_at : s_at + ns]
            mp_rows = mp[p_at : p_at + npair]
            s_at += ns
            p_at += npair
            tc = self.term_contrib.copy()
            tc[members] = term_contributions(self.coeff[members], ms_rows)
            pc = self.pair_contrib.copy()
            if npair:
                sub_joint = np.flatnonzero(joint_mask(vp))
                sub = pair_contributions(
                    self.coeff,
                    led.pair_i[touched],
                    led.pair_j[touched],
                    npair,
                    sub_joint,
                    mp_rows[sub_joint],
                )
                pc[touched] = sub
            out.append(
                clamped_variance(float(np.sum(tc) + np.sum(pc)))
            )
        return out


def run_allocation(
    obs: Observable,
    state: StateVector,
    cover: GroupCover,
    config: AllocationConfig,
    engine: MomentEngine | None = None,
) -> AllocationResult:
    """Run the full allocate-measure-update loop until the budget is spent.

    Returns the final ledger, its estimate report, and one trace row per
    executed action.  On a sampling or numerical failure the exception is
    re-raised with the partial trace attached as `partial_trace`.
    """
    if engine is None:
        engine = MomentEngine(config.moments)
    rng = np.random.default_rng(config.seed)
    loop = _FastLoop(obs, cover, engine)
    ledger = loop.ledger
    trace: list[TraceRow] = []

    try:
        loop.refresh()
        step = 0
        while cover.num_groups > 0:
            remaining = config.budget - ledger.effective_shots
            if remaining < 1:
                break
            actions = _candidate_actions(cover, config, remaining)
            predictions = loop.predict(actions)
            best = int(np.argmin(predictions))
            action = actions[best]
            if action.kind == "group":
                outcome = sample_group_shot(
                    state, obs, cover.groups[action.group], rng
                )
            else:
                outcome = sample_double_shot(
                    state, obs, rng, max_qubits=config.max_qubits
                )
            ledger.record(outcome)
            loop.refresh()
            step += 1
            trace.append(
                TraceRow(
                    step=step,
                    kind=action.kind,
                    group=action.group,
                    predicted_variance=predictions[best],
                    realized_variance=loop.variance,
                    m=ledger.shots_taken,
                    m_double=ledger.double_shots,
                )
            )
    except Exception as err:
        err.partial_trace = tuple(trace)
        raise

    report = estimate(ledger, obs, engine)
    return AllocationResult(ledger=ledger, report=report, trace=tuple(trace))
