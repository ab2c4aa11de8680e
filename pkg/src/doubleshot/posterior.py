"""Bayesian posterior moments for single terms and commuting pairs.

Two posteriors, both under flat priors and evaluated in the log domain:

  * single-term: density over theta in [0,1] proportional to
    theta^s+ (1-theta)^s- phi^d+ (1-phi)^d-, with phi = theta^2 + (1-theta)^2;
  * pair: density over the 3-simplex of joint outcome probabilities
    (t++, t+-, t-+), with t-- = 1 - sum.  Factors: joint double counts on the
    quadratic map phi_joint, joint single counts on the t's themselves, and
    independent single counts on the marginals theta_i = t++ + t+-,
    theta_j = t++ + t-+.

Component order for all length-4 joint vectors is (++, +-, -+, --), first
sign = lower term index.

Backends: deterministic quadrature (Gauss-Legendre in 1-D, midpoint tensor
grid on the simplex) and a Metropolis random walk in additive-logistic
coordinates.  When a pair has no joint counts at all, its posterior
factorizes into the two 1-D posteriors and the moments are assembled as exact
products; this is what makes never-measured-together pairs contribute exactly
zero covariance.
"""
from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import InvalidInputError, NumericalError

_PAIR_BATCH_COLUMNS = 256


def _check_counts(values, what: str):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"non-finite {what} counts: {values!r}")
    if np.any(arr < 0):
        raise InvalidInputError(f"negative {what} counts: {values!r}")


@dataclass(frozen=True)
class SingleTally:
    """Counts feeding the single-term posterior; reals admit virtual fractions."""

    s_plus: float = 0.0
    s_minus: float = 0.0
    d_plus: float = 0.0
    d_minus: float = 0.0

    def __post_init__(self):
        _check_counts(
            (self.s_plus, self.s_minus, self.d_plus, self.d_minus), "single"
        )

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.s_plus, self.s_minus, self.d_plus, self.d_minus], dtype=float
        )


@dataclass(frozen=True)
class PairTally:
    """Counts feeding one commuting pair's posterior.

    s_i_indep / s_j_indep are the single-scheme counts of each term measured
    in a context that did not include the other term.
    """

    s_joint: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    d_joint: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    s_i_indep: tuple[float, float] = (0.0, 0.0)
    s_j_indep: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("s_joint", "d_joint"):
            if len(getattr(self, name)) != 4:
                raise InvalidInputError(f"{name} needs 4 entries")
        for name in ("s_i_indep", "s_j_indep"):
            if len(getattr(self, name)) != 2:
                raise InvalidInputError(f"{name} needs 2 entries")
        _check_counts(self.as_array(), "pair")

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [
                np.asarray(self.s_joint, dtype=float),
                np.asarray(self.d_joint, dtype=float),
                np.asarray(self.s_i_indep, dtype=float),
                np.asarray(self.s_j_indep, dtype=float),
            ]
        )

    @property
    def has_joint_data(self) -> bool:
        return any(self.s_joint) or any(self.d_joint)


@dataclass(frozen=True)
class SingleMoments:
    theta: float
    theta_sq: float
    phi: float

    @property
    def variance(self) -> float:
        return self.theta_sq - self.theta * self.theta


@dataclass(frozen=True)
class PairMoments:
    theta_joint: tuple[float, float, float, float]
    phi_joint: tuple[float, float, float, float]
    theta_prod: float
    theta_i: float
    theta_j: float

    @property
    def covariance(self) -> float:
        """Same-posterior bracket: E[theta_i theta_j] - E[theta_i] E[theta_j]."""
        return self.theta_prod - self.theta_i * self.theta_j


@dataclass(frozen=True)
class MomentConfig:
    """Backend selection and numerical settings for moment evaluation."""

    backend: str = "quadrature"
    single_nodes: int = 512
    pair_cells: int = 16
    mcmc_burn_in: int = 2000
    mcmc_samples: int = 20000
    mcmc_thin: int = 1
    mcmc_initial_step: float = 0.8
    mcmc_target_band: tuple[float, float] = (0.2, 0.5)
    mcmc_band_margin: float = 0.05
    mcmc_seed: int = 0

    def __post_init__(self):
        if self.backend not in ("quadrature", "mcmc"):
            raise InvalidInputError(f"unknown backend {self.backend!r}")

    @classmethod
    def oracle(cls, **overrides) -> "MomentConfig":
        """The 60-cells-per-axis midpoint grid used as the test oracle."""
        overrides.setdefault("pair_cells", 60)
        return cls(**overrides)


DEFAULT_CONFIG = MomentConfig()


def phi_of_theta(theta):
    """Probability that two i.i.d. +-1 outcomes with P(+1)=theta agree."""
    arr = np.asarray(theta, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise InvalidInputError(f"theta out of [0,1]: {theta!r}")
    out = arr * arr + (1.0 - arr) * (1.0 - arr)
    return out if out.ndim else float(out)


def phi_joint_of_theta_joint(theta_joint):
    """Map joint outcome probabilities to joint agreement probabilities.

    For two independent copies measured jointly, component a of the output is
    the probability that both copies produce outcome pattern parity a.
    """
    t = np.asarray(theta_joint, dtype=float)
    if t.shape[-1] != 4:
        raise InvalidInputError("theta_joint needs 4 components")
    if np.any(t < -1e-12):
        raise InvalidInputError(f"negative joint probability: {theta_joint!r}")
    sums = t.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise InvalidInputError(
            f"joint probabilities must sum to 1 within 1e-9, got {sums!r}"
        )
    t0, t1, t2, t3 = t[..., 0], t[..., 1], t[..., 2], t[..., 3]
    out = np.stack(
        [
            t0 * t0 + t1 * t1 + t2 * t2 + t3 * t3,
            2.0 * (t0 * t1 + t2 * t3),
            2.0 * (t0 * t2 + t1 * t3),
            2.0 * (t0 * t3 + t1 * t2),
        ],
        axis=-1,
    )
    return out


# ---------------------------------------------------------------------------
# quadrature grids


class _SingleGrid:
    """Gauss-Legendre nodes on [0,1] with per-node log factors pre-tabulated."""

    def __init__(self, nodes: int):
        x, w = np.polynomial.legendre.leggauss(nodes)
        # (1-x)/2 is exactly the reversed node list, so symmetric integrands
        # stay symmetric in floating point
        t = 0.5 * (x + 1.0)
        omt = 0.5 * (1.0 - x)
        phi = t * t + omt * omt
        one_minus_phi = 2.0 * t * omt
        self.weights = 0.5 * w
        self.logs = np.stack(
            [np.log(t), np.log(omt), np.log(phi), np.log(one_minus_phi)], axis=1
        )
        self.g = np.stack([t, t * t, phi], axis=1)
        self.gw = self.g * self.weights[:, None]

    def moments(self, counts: np.ndarray) -> np.ndarray:
        """counts (K,4) -> moments (K,3) = E[theta], E[theta^2], E[phi]."""
        loglike = self.logs @ counts.T
        loglike -= loglike.max(axis=0, keepdims=True)
        np.exp(loglike, out=loglike)
        den = self.weights @ loglike
        if not np.all(np.isfinite(den)) or np.any(den <= 0):
            raise NumericalError("single-term posterior normalization failed")
        out = (self.gw.T @ loglike) / den
        return out.T


class _PairGrid:
    """Midpoint tensor grid over the open 3-simplex."""

    def __init__(self, cells: int):
        m = (np.arange(cells) + 0.5) / cells
        u, v, w = np.meshgrid(m, m, m, indexing="ij")
        u, v, w = u.ravel(), v.ravel(), w.ravel()
        keep = u + v + w < 1.0
        t0, t1, t2 = u[keep], v[keep], w[keep]
        t3 = 1.0 - t0 - t1 - t2
        ti, omi = t0 + t1, t2 + t3
        tj, omj = t0 + t2, t1 + t3
        phi0 = t0 * t0 + t1 * t1 + t2 * t2 + t3 * t3
        phi1 = 2.0 * (t0 * t1 + t2 * t3)
        phi2 = 2.0 * (t0 * t2 + t1 * t3)
        phi3 = 2.0 * (t0 * t3 + t1 * t2)
        cols = [t0, t1, t2, t3, phi0, phi1, phi2, phi3, ti, omi, tj, omj]
        self.logs = np.log(np.stack(cols, axis=1))
        self.g = np.stack(
            [t0, t1, t2, t3, phi0, phi1, phi2, phi3, ti * tj, ti, tj], axis=1
        )
        self.npoints = t0.size

    def moments(self, counts: np.ndarray) -> np.ndarray:
        """counts (K,12) -> moments (K,11); cells have equal weight."""
        out = np.empty((counts.shape[0], 11))
        for lo in range(0, counts.shape[0], _PAIR_BATCH_COLUMNS):
            block = counts[lo : lo + _PAIR_BATCH_COLUMNS]
            loglike = self.logs @ block.T
            loglike -= loglike.max(axis=0, keepdims=True)
            np.exp(loglike, out=loglike)
            den = loglike.sum(axis=0)
            if not np.all(np.isfinite(den)) or np.any(den <= 0):
                raise NumericalError("pair posterior normalization failed")
            out[lo : lo + block.shape[0]] = ((self.g.T @ loglike) / den).T
        return out


@lru_cache(maxsize=8)
def _single_grid(nodes: int) -> _SingleGrid:
    return _SingleGrid(nodes)


@lru_cache(maxsize=4)
def _pair_grid(cells: int) -> _PairGrid:
    return _PairGrid(cells)


# ---------------------------------------------------------------------------
# MCMC backend


def _run_chain(
    logdensity_y: Callable[[np.ndarray], float],
    dim: int,
    config: MomentConfig,
    rng: np.random.Generator,
):
    """Random-walk Metropolis in R^dim with burn-in step adaptation.

    Returns (retained y samples, sampling-phase acceptance rate).
    """
    total = config.mcmc_burn_in + config.mcmc_samples * config.mcmc_thin
    normals = rng.standard_normal((total, dim))
    log_uniforms = np.log(rng.random(total))
    step = config.mcmc_initial_step
    low, high = config.mcmc_target_band

    y = np.zeros(dim)
    logp = logdensity_y(y)
    if not np.isfinite(logp):
        raise NumericalError("log-density not finite at the simplex center")
    retained = np.empty((config.mcmc_samples, dim))
    accepted_window = 0
    accepted_sampling = 0
    kept = 0
    for k in range(total):
        proposal = y + step * normals[k]
        logp_new = logdensity_y(proposal)
        if log_uniforms[k] < logp_new - logp:
            y, logp = proposal, logp_new
            accepted_window += 1
            if k >= config.mcmc_burn_in:
                accepted_sampling += 1
        if k < config.mcmc_burn_in:
            if (k + 1) % 100 == 0:
                rate = accepted_window / 100.0
                if rate < low:
                    step *= 0.7
                elif rate > high:
                    step *= 1.4
                accepted_window = 0
        else:
            if (k - config.mcmc_burn_in) % config.mcmc_thin == 0:
                retained[kept] = y
                kept += 1
    if accepted_sampling == 0:
        raise NumericalError("Metropolis chain rejected every proposal")
    rate = accepted_sampling / (config.mcmc_samples * config.mcmc_thin)
    return retained[:kept], rate


def _y_to_simplex(y: np.ndarray) -> np.ndarray:
    """Additive-logistic map R^(n-1) -> open n-simplex (last component pinned)."""
    z = np.concatenate([y, [0.0]])
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def mcmc_sample(
    logdensity: Callable[[np.ndarray], float],
    ncomp: int,
    config: MomentConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw samples from a density on the (ncomp-1)-simplex.

    logdensity takes the full ncomp-component probability vector. The walk
    runs in unconstrained additive-logistic coordinates with the transform
    Jacobian (the product of all components) folded into the target.
    """
    if ncomp < 2:
        raise InvalidInputError("simplex sampling needs at least 2 components")

    def logdensity_y(y):
        theta = _y_to_simplex(y)
        if np.any(theta <= 0.0):
            return -np.inf
        return logdensity(theta) + np.log(theta).sum()

    ys, _ = _run_chain(logdensity_y, ncomp - 1, config, rng)
    out = np.empty((ys.shape[0], ncomp))
    for i, y in enumerate(ys):
        out[i] = _y_to_simplex(y)
    return out


def _tally_rng(config: MomentConfig, counts: np.ndarray) -> np.random.Generator:
    """Deterministic per-tally generator so cached results are reproducible."""
    digest = zlib.crc32(counts.tobytes())
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((config.mcmc_seed, digest)))
    )


def _logfactors(counts: np.ndarray, columns) -> Callable[[np.ndarray], float]:
    """Sum of count * log(column(theta)) skipping zero counts (avoids 0 * -inf)."""
    active = [(c, f) for c, f in zip(counts, columns) if c != 0.0]

    def logdensity(theta):
        total = 0.0
        for c, f in active:
            val = f(theta)
            if val <= 0.0:
                return -np.inf
            total += c * np.log(val)
        return total

    return logdensity


_SINGLE_COLUMNS = [
    lambda t: t[0],
    lambda t: t[1],
    lambda t: t[0] * t[0] + t[1] * t[1],
    lambda t: 2.0 * t[0] * t[1],
]

_PAIR_COLUMNS = [
    lambda t: t[0],
    lambda t: t[1],
    lambda t: t[2],
    lambda t: t[3],
    lambda t: t[0] * t[0] + t[1] * t[1] + t[2] * t[2] + t[3] * t[3],
    lambda t: 2.0 * (t[0] * t[1] + t[2] * t[3]),
    lambda t: 2.0 * (t[0] * t[2] + t[1] * t[3]),
    lambda t: 2.0 * (t[0] * t[3] + t[1] * t[2]),
    lambda t: t[0] + t[1],
    lambda t: t[2] + t[3],
    lambda t: t[0] + t[2],
    lambda t: t[1] + t[3],
]


def _mcmc_with_fallback(kind: str, counts: np.ndarray, config: MomentConfig):
    """Run the MCMC backend; fall back to quadrature if acceptance drifts out."""
    low, high = config.mcmc_target_band
    margin = config.mcmc_band_margin
    columns = _SINGLE_COLUMNS if kind == "single" else _PAIR_COLUMNS
    logdensity = _logfactors(counts, columns)
    ncomp = 2 if kind == "single" else 4

    def logdensity_y(y):
        theta = _y_to_simplex(y)
        if np.any(theta <= 0.0):
            return -np.inf
        return logdensity(theta) + np.log(theta).sum()

    rng = _tally_rng(config, counts)
    ys, rate = _run_chain(logdensity_y, ncomp - 1, config, rng)
    if rate < low - margin or rate > high + margin:
        warnings.warn(
            f"MCMC acceptance {rate:.3f} outside [{low}, {high}] band after "
            "adaptation; falling back to quadrature",
            RuntimeWarning,
            stacklevel=3,
        )
        grid = (
            _single_grid(config.single_nodes)
            if kind == "single"
            else _pair_grid(config.pair_cells)
        )
        return grid.moments(counts[None, :])[0]
    samples = np.empty((ys.shape[0], ncomp))
    for i, y in enumerate(ys):
        samples[i] = _y_to_simplex(y)
    if kind == "single":
        theta = samples[:, 0]
        return np.array(
            [theta.mean(), (theta * theta).mean(), phi_of_theta(theta).mean()]
        )
    t0, t1, t2, t3 = samples.T
    ti, tj = t0 + t1, t0 + t2
    phi = phi_joint_of_theta_joint(samples)
    return np.array(
        [
            t0.mean(), t1.mean(), t2.mean(), t3.mean(),
            phi[:, 0].mean(), phi[:, 1].mean(), phi[:, 2].mean(), phi[:, 3].mean(),
            (ti * tj).mean(), ti.mean(), tj.mean(),
        ]
    )


# ---------------------------------------------------------------------------
# the cached engine


class MomentEngine:
    """Caches moment evaluations keyed by exact tally bytes.

    Virtual-measurement search re-evaluates mostly unchanged tallies, so a
    value-keyed cache makes repeat lookups free without any invalidation
    logic.  One engine should not be shared between threads.
    """

    def __init__(self, config: MomentConfig = DEFAULT_CONFIG):
        self.config = config
        self._single: dict[bytes, np.ndarray] = {}
        self._pair: dict[bytes, np.ndarray] = {}

    # -- array paths ------------------------------------------------------

    def single_block(self, counts: np.ndarray) -> np.ndarray:
        """counts (K,4) -> (K,3) moment rows [theta, theta_sq, phi]."""
        counts = np.ascontiguousarray(counts, dtype=float)
        if counts.shape[0] == 0:
            return np.zeros((0, 3))
        rows = [counts[k].tobytes() for k in range(counts.shape[0])]
        missing = [k for k, key in enumerate(rows) if key not in self._single]
        if missing:
            sub = counts[missing]
            if self.config.backend == "quadrature":
                computed = _single_grid(self.config.single_nodes).moments(sub)
            else:
                computed = np.stack(
                    [
                        _mcmc_with_fallback("single", row, self.config)
                        for row in sub
                    ]
                )
            # exact symmetry: with no sign information the posterior is even
            # about 1/2, so the mean is 1/2 identically
            symmetric = (sub[:, 0] == 0.0) & (sub[:, 1] == 0.0)
            computed[symmetric, 0] = 0.5
            for pos, k in enumerate(missing):
                self._single[rows[k]] = computed[pos]
        return np.stack([self._single[key] for key in rows])

    def pair_block(self, counts: np.ndarray) -> np.ndarray:
        """counts (K,12) -> (K,11) moment rows.

        Column order in: s_joint(4), d_joint(4), s_i_indep(2), s_j_indep(2).
        Column order out: theta_joint(4), phi_joint(4), theta_prod,
        theta_i, theta_j.
        """
        counts = np.ascontiguousarray(counts, dtype=float)
        if counts.shape[0] == 0:
            return np.zeros((0, 11))
        rows = [counts[k].tobytes() for k in range(counts.shape[0])]
        missing = [k for k, key in enumerate(rows) if key not in self._pair]
        if missing:
            sub = counts[missing]
            factorized = np.all(sub[:, :8] == 0.0, axis=1)
            computed = np.empty((sub.shape[0], 11))
            full = ~factorized
            if np.any(full):
                if self.config.backend == "quadrature":
                    computed[full] = _pair_grid(self.config.pair_cells).moments(
                        sub[full]
                    )
                else:
                    computed[full] = np.stack(
                        [
                            _mcmc_with_fallback("pair", row, self.config)
                            for row in sub[full]
                        ]
                    )
            if np.any(factorized):
                computed[factorized] = self._factorized_rows(sub[factorized])
            for pos, k in enumerate(missing):
                self._pair[rows[k]] = computed[pos]
        return np.stack([self._pair[key] for key in rows])

    def _factorized_rows(self, sub: np.ndarray) -> np.ndarray:
        """Pairs never measured together: exact products of 1-D moments."""
        k = sub.shape[0]
        singles = np.zeros((2 * k, 4))
        singles[:k, 0:2] = sub[:, 8:10]
        singles[k:, 0:2] = sub[:, 10:12]
        mom = self.single_block(singles)
        ti, tj = mom[:k, 0], mom[k:, 0]
        pi, pj = mom[:k, 2], mom[k:, 2]
        out = np.empty((k, 11))
        out[:, 0] = ti * tj
        out[:, 1] = ti * (1.0 - tj)
        out[:, 2] = (1.0 - ti) * tj
        out[:, 3] = (1.0 - ti) * (1.0 - tj)
        out[:, 4] = pi * pj
        out[:, 5] = pi * (1.0 - pj)
        out[:, 6] = (1.0 - pi) * pj
        out[:, 7] = (1.0 - pi) * (1.0 - pj)
        out[:, 8] = ti * tj
        out[:, 9] = ti
        out[:, 10] = tj
        return out

    # -- per-tally conveniences --------------------------------------------

    def single_moments(self, tally: SingleTally) -> SingleMoments:
        row = self.single_block(tally.as_array()[None, :])[0]
        return SingleMoments(theta=row[0], theta_sq=row[1], phi=row[2])

    def pair_moments(self, tally: PairTally) -> PairMoments:
        row = self.pair_block(tally.as_array()[None, :])[0]
        return PairMoments(
            theta_joint=tuple(row[0:4]),
            phi_joint=tuple(row[4:8]),
            theta_prod=row[8],
            theta_i=row[9],
            theta_j=row[10],
        )


def single_moments(
    tally: SingleTally, config: MomentConfig = DEFAULT_CONFIG
) -> SingleMoments:
    """Posterior means of theta, theta^2, phi for one term."""
    return MomentEngine(config).single_moments(tally)


def pair_moments(
    tally: PairTally, config: MomentConfig = DEFAULT_CONFIG
) -> PairMoments:
    """Posterior means of the joint-outcome functionals for one commuting pair."""
    return MomentEngine(config).pair_moments(tally)
