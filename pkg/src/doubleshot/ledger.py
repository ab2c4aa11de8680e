"""Outcome bookkeeping and estimate assembly.

The ledger stores, per observable term, the four single-term counts
(s+, s-, d+, d-) and, per commuting unordered pair, a 12-component count row:

    columns 0-3   s_joint   joint single-scheme counts (++, +-, -+, --)
    columns 4-7   d_joint   joint double-scheme counts (same order)
    columns 8-9   s_i_indep single counts of the lower-index term taken in a
                            context that did not measure the other term (+,-)
    columns 10-11 s_j_indep same for the higher-index term

First sign in a joint bin is the lower-index term.  Only commuting pairs are
tracked: anti-commuting pairs can never be jointly measured on a single copy
and their covariance is pinned to zero, so they need no storage.

Real shots add integer counts; the allocator's virtual updates add fractional
expectation-valued counts to a copy (see allocator module).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .pauli import Observable, commutes
from .posterior import (
    DEFAULT_CONFIG,
    MomentConfig,
    MomentEngine,
    PairTally,
    SingleTally,
)
from .simulator import ShotOutcome

_NEGATIVE_VARIANCE_FLOOR = -1e-9


class TallyLedger:
    """All measurement counts for one observable, plus shot counters.

    shots_taken counts every executed action (group or double); double_shots
    counts the double ones, so the effective budget spent is
    shots_taken + double_shots.
    """

    def __init__(self, obs: Observable):
        p = obs.num_terms
        strings = obs.strings()
        self.num_terms = p
        self.singles = np.zeros((p, 4))
        keys = [
            (i, j)
            for i in range(p)
            for j in range(i + 1, p)
            if commutes(strings[i], strings[j])
        ]
        self.pair_keys: tuple[tuple[int, int], ...] = tuple(keys)
        self.pair_index = {key: k for k, key in enumerate(keys)}
        self.pairs = np.zeros((len(keys), 12))
        self.pair_i = np.array([i for i, _ in keys], dtype=np.intp)
        self.pair_j = np.array([j for _, j in keys], dtype=np.intp)
        # pair rows having term t as either endpoint, for group-shot updates
        touching = [[] for _ in range(p)]
        for k, (i, j) in enumerate(keys):
            touching[i].append(k)
            touching[j].append(k)
        self.pairs_touching = tuple(np.array(t, dtype=np.intp) for t in touching)
        self.shots_taken = 0
        self.double_shots = 0

    @property
    def num_pairs(self) -> int:
        return len(self.pair_keys)

    @property
    def effective_shots(self) -> int:
        return self.shots_taken + self.double_shots

    def copy(self) -> "TallyLedger":
        dup = object.__new__(TallyLedger)
        dup.num_terms = self.num_terms
        dup.singles = self.singles.copy()
        dup.pair_keys = self.pair_keys
        dup.pair_index = self.pair_index
        dup.pairs = self.pairs.copy()
        dup.pair_i = self.pair_i
        dup.pair_j = self.pair_j
        dup.pairs_touching = self.pairs_touching
        dup.shots_taken = self.shots_taken
        dup.double_shots = self.double_shots
        return dup

    # -- accessors ----------------------------------------------------------

    def single_tally(self, i: int) -> SingleTally:
        row = self.singles[i]
        return SingleTally(row[0], row[1], row[2], row[3])

    def pair_tally(self, i: int, j: int) -> PairTally:
        row = self.pairs[self.pair_index[(i, j)]]
        return PairTally(
            s_joint=tuple(row[0:4]),
            d_joint=tuple(row[4:8]),
            s_i_indep=tuple(row[8:10]),
            s_j_indep=tuple(row[10:12]),
        )

    def is_tracked_pair(self, i: int, j: int) -> bool:
        return (i, j) in self.pair_index

    # -- recording ----------------------------------------------------------

    def record(self, outcome: ShotOutcome) -> None:
        """Fold one real shot into the counts and advance the counters."""
        values = outcome.values
        for idx in values:
            if not 0 <= idx < self.num_terms:
                raise InvalidInputError(
                    f"outcome term index {idx} outside 0..{self.num_terms - 1}"
                )
        if outcome.kind == "group":
            self._record_group(values)
        elif outcome.kind == "double":
            if len(values) != self.num_terms:
                raise InvalidInputError(
                    "double outcome must cover every term; got "
                    f"{len(values)} of {self.num_terms}"
                )
            self._record_double(values)
        else:
            raise InvalidInputError(f"unknown outcome kind {outcome.kind!r}")

    def _record_group(self, values: dict[int, int]) -> None:
        touched: set[int] = set()
        for i, o in values.items():
            self.singles[i, 0 if o > 0 else 1] += 1.0
            touched.update(self.pairs_touching[i].tolist())
        for k in touched:
            i, j = self.pair_keys[k]
            oi = values.get(i)
            oj = values.get(j)
            if oi is not None and oj is not None:
                self.pairs[k, (0 if oi > 0 else 2) + (0 if oj > 0 else 1)] += 1.0
            elif oi is not None:
                self.pairs[k, 8 + (0 if oi > 0 else 1)] += 1.0
            else:
                self.pairs[k, 10 + (0 if oj > 0 else 1)] += 1.0
        self.shots_taken += 1

    def _record_double(self, values: dict[int, int]) -> None:
        o = np.array([values[i] for i in range(self.num_terms)])
        plus = o > 0
        self.singles[:, 2] += plus
        self.singles[:, 3] += ~plus
        if self.num_pairs:
            bins = 4 + np.where(plus[self.pair_i], 0, 2) + np.where(
                plus[self.pair_j], 0, 1
            )
            self.pairs[np.arange(self.num_pairs), bins] += 1.0
        self.shots_taken += 1
        self.double_shots += 1

    # -- integrity ----------------------------------------------------------

    def validate(self) -> None:
        """Check the count identities that every real (integer) ledger obeys."""
        d_total = self.singles[:, 2] + self.singles[:, 3]
        if not np.allclose(d_total, self.double_shots, atol=1e-9):
            raise InvalidInputError(
                "double counts do not match the double-shot counter"
            )
        if np.any(self.singles < 0) or np.any(self.pairs < 0):
            raise InvalidInputError("negative counts in ledger")
        if self.num_pairs == 0:
            return
        pr = self.pairs
        checks = [
            (pr[:, 0] + pr[:, 1] + pr[:, 8], self.singles[self.pair_i, 0]),
            (pr[:, 2] + pr[:, 3] + pr[:, 9], self.singles[self.pair_i, 1]),
            (pr[:, 0] + pr[:, 2] + pr[:, 10], self.singles[self.pair_j, 0]),
            (pr[:, 1] + pr[:, 3] + pr[:, 11], self.singles[self.pair_j, 1]),
            (pr[:, 4] + pr[:, 5], self.singles[self.pair_i, 2]),
            (pr[:, 6] + pr[:, 7], self.singles[self.pair_i, 3]),
            (pr[:, 4] + pr[:, 6], self.singles[self.pair_j, 2]),
            (pr[:, 5] + pr[:, 7], self.singles[self.pair_j, 3]),
        ]
        for got, want in checks:
            if not np.allclose(got, want, atol=1e-9):
                raise InvalidInputError(
                    "pair counts inconsistent with single-term totals"
                )


@dataclass(frozen=True)
class TermReport:
    index: int
    string: str
    coefficient: float
    theta: float
    variance_contribution: float


@dataclass(frozen=True)
class PairReport:
    i: int
    j: int
    covariance: float
    contribution: float


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate, claimed variance, and their per-term/per-pair split."""

    mean: float
    variance: float
    per_term: tuple[TermReport, ...]
    per_pair: tuple[PairReport, ...]
    m: int
    m_double: int

    @property
    def m_eff(self) -> int:
        return self.m + self.m_double

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "m": self.m,
            "m_double": self.m_double,
            "m_eff": self.m_eff,
            "per_term": [
                {
                    "index": t.index,
                    "string": t.string,
                    "coefficient": t.coefficient,
                    "theta": t.theta,
                    "variance_contribution": t.variance_contribution,
                }
                for t in self.per_term
            ],
            "per_pair": [
                {
                    "i": q.i,
                    "j": q.j,
                    "covariance": q.covariance,
                    "contribution": q.contribution,
                }
                for q in self.per_pair
            ],
        }


def joint_mask(pairs: np.ndarray) -> np.ndarray:
    """True for pair rows that carry any joint (s or d) counts."""
    if pairs.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return np.any(pairs[:, :8] > 0, axis=1)


def term_contributions(coeff: np.ndarray, smom: np.ndarray) -> np.ndarray:
    """Per-term variance contributions 4 c_i^2 (E[theta^2] - E[theta]^2)."""
    theta = smom[:, 0]
    return 4.0 * coeff * coeff * (smom[:, 1] - theta * theta)


def pair_contributions(
    coeff: np.ndarray,
    pair_i: np.ndarray,
    pair_j: np.ndarray,
    num_pairs: int,
    joint_rows: np.ndarray,
    pmom_joint: np.ndarray,
) -> np.ndarray:
    """Per-pair contributions 8 c_i c_j Cov; zero for never-jointly-measured.

    pmom_joint holds the moment rows for exactly the joint_rows indices.
    """
    out = np.zeros(num_pairs)
    if joint_rows.size:
        cov = pmom_joint[:, 8] - pmom_joint[:, 9] * pmom_joint[:, 10]
        out[joint_rows] = (
            8.0 * coeff[pair_i[joint_rows]] * coeff[pair_j[joint_rows]] * cov
        )
    return out


def clamped_variance(total: float) -> float:
    """Apply the nonnegativity floor to the summed variance."""
    if total < 0.0:
        if total < _NEGATIVE_VARIANCE_FLOOR:
            warnings.warn(
                f"claimed variance {total:.3e} fell below the numerical "
                "floor; clamping to zero",
                RuntimeWarning,
                stacklevel=3,
            )
        return 0.0
    return total


def estimate(
    ledger: TallyLedger,
    obs: Observable,
    engine: MomentEngine | None = None,
    config: MomentConfig = DEFAULT_CONFIG,
) -> EstimateReport:
    """Assemble the point estimate and its claimed variance from the counts.

    Mean: offset + sum_i c_i (2 theta_i - 1) with theta_i the posterior mean
    from the full single tally.  Variance: 4 sum_i c_i^2 Var(theta_i) plus
    8 sum over jointly measured commuting pairs of c_i c_j Cov(theta_i,
    theta_j), where both the product moment and the subtracted marginals come
    from the same pair posterior.  Pairs with no joint counts contribute
    exactly zero and are skipped.
    """
    if ledger.num_terms != obs.num_terms:
        raise InvalidInputError(
            f"ledger tracks {ledger.num_terms} terms, observable has "
            f"{obs.num_terms}"
        )
    if engine is None:
        engine = MomentEngine(config)
    coeff = obs.coefficients()
    strings = obs.strings()

    if ledger.num_terms == 0:
        return EstimateReport(
            mean=obs.identity_offset,
            variance=0.0,
            per_term=(),
            per_pair=(),
            m=ledger.shots_taken,
            m_double=ledger.double_shots,
        )

    smom = engine.single_block(ledger.singles)
    theta = smom[:, 0]
    mean = obs.identity_offset + float(np.sum(coeff * (2.0 * theta - 1.0)))
    term_contrib = term_contributions(coeff, smom)

    joint_rows = np.flatnonzero(joint_mask(ledger.pairs))
    pmom_joint = (
        engine.pair_block(ledger.pairs[joint_rows])
        if joint_rows.size
        else np.zeros((0, 11))
    )
    pair_contrib = pair_contributions(
        coeff, ledger.pair_i, ledger.pair_j, ledger.num_pairs,
        joint_rows, pmom_joint,
    )
    variance = clamped_variance(float(np.sum(term_contrib) + np.sum(pair_contrib)))

    per_pair = []
    for pos, k in enumerate(joint_rows):
        i, j = ledger.pair_keys[k]
        cov = float(pmom_joint[pos, 8] - pmom_joint[pos, 9] * pmom_joint[pos, 10])
        per_pair.append(
            PairReport(
                i=i, j=j, covariance=cov,
                contribution=float(pair_contrib[k]),
            )
        )

    per_term = tuple(
        TermReport(
            index=i,
            string=str(strings[i]),
            coefficient=float(coeff[i]),
            theta=float(theta[i]),
            variance_contribution=float(term_contrib[i]),
        )
        for i in range(obs.num_terms)
    )
    return EstimateReport(
        mean=mean,
        variance=variance,
        per_term=per_term,
        per_pair=tuple(per_pair),
        m=ledger.shots_taken,
        m_double=ledger.double_shots,
    )
