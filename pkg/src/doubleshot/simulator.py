"""Exact dense statevector oracle: ground states, expectations, seeded sampling.

All stochastic paths draw from an explicitly passed numpy Generator; the
project-wide RNG is numpy's PCG64 (see README). Basis-state indices put
qubit 1 in the most significant bit, matching the kron order of pauli_matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, NumericalError, ResourceLimitError
from .pauli import Observable, PauliString, commutes, double

# dense work caps: 2^10 amplitudes single-copy, 2^20 doubled
DEFAULT_MAX_QUBITS = 10

_NORM_TOL = 1e-10
_PROJECTION_NORM_TOL = 1e-9

_SINGLE_QUBIT = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class StateVector:
    """Immutable normalized state of `width` qubits."""

    __slots__ = ("width", "amplitudes")

    def __init__(self, amplitudes, width: int | None = None):
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size == 0 or amps.size & (amps.size - 1):
            raise InvalidInputError("amplitude vector length must be a power of 2")
        inferred = amps.size.bit_length() - 1
        if width is None:
            width = inferred
        elif width != inferred:
            raise InvalidInputError(
                f"width {width} inconsistent with {amps.size} amplitudes"
            )
        if inferred == 0:
            raise InvalidInputError("need at least one qubit")
        nrm = np.linalg.norm(amps)
        if abs(nrm - 1.0) > _NORM_TOL:
            raise InvalidInputError(f"state not normalized (norm {nrm!r})")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "amplitudes", amps)

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")


@dataclass(frozen=True)
class ShotOutcome:
    """One measurement shot: kind is 'group' or 'double', values maps term index -> +-1."""

    kind: str
    values: dict[int, int]


def _check_cap(width: int, max_qubits: int):
    if width > max_qubits:
        raise ResourceLimitError(
            f"{width} qubits exceeds the dense cap of {max_qubits}; "
            "raise max_qubits explicitly if you mean it"
        )


# (width, x_mask, z_mask) -> (source indices, signs, phase)
_apply_cache: dict = {}


def _pauli_apply_data(width: int, x_mask: int, z_mask: int):
    key = (width, x_mask, z_mask)
    hit = _apply_cache.get(key)
    if hit is not None:
        return hit
    dim = 1 << width
    idx = np.arange(dim, dtype=np.int64)
    src = idx ^ x_mask
    signs = 1.0 - 2.0 * (np.bitwise_count(src & z_mask) & 1)
    n_y = (x_mask & z_mask).bit_count()
    phase = 1j ** n_y
    data = (src, signs, phase)
    _apply_cache[key] = data
    return data


def apply_pauli(s: PauliString, amplitudes: np.ndarray) -> np.ndarray:
    """Return P|v> without forming the dense matrix.

    Uses P = i^{n_Y} X^x Z^z: the Z part contributes (-1)^(b.z), the X part
    permutes basis states by XOR with the x mask.
    """
    src, signs, phase = _pauli_apply_data(s.width, s.x_mask, s.z_mask)
    return phase * signs * amplitudes[src]


def pauli_matrix(s: PauliString) -> np.ndarray:
    """Dense 2^q x 2^q matrix of the string (kron over letters, qubit 1 first)."""
    m = np.array([[1.0 + 0j]])
    for ch in s.letters:
        m = np.kron(m, _SINGLE_QUBIT[ch])
    return m


def observable_matrix(obs: Observable, max_qubits: int = DEFAULT_MAX_QUBITS) -> np.ndarray:
    _check_cap(obs.width, max_qubits)
    dim = 1 << obs.width
    h = np.zeros((dim, dim), dtype=complex)
    for t in obs.terms:
        h += t.coefficient * pauli_matrix(t.string)
    h += obs.identity_offset * np.eye(dim)
    return h


def ground_state(obs: Observable, max_qubits: int = DEFAULT_MAX_QUBITS) -> StateVector:
    """Eigenvector of the smallest eigenvalue, with a fixed global phase.

    The phase convention makes the largest-magnitude amplitude real positive,
    so degenerate ground spaces still yield a deterministic (if basis-dependent)
    representative.
    """
    h = observable_matrix(obs, max_qubits)
    _, vecs = np.linalg.eigh(h)
    v = vecs[:, 0]
    k = int(np.argmax(np.abs(v)))
    pivot = v[k]
    v = v * (pivot.conjugate() / abs(pivot))
    return StateVector(v / np.linalg.norm(v), obs.width)


def ground_energy(obs: Observable, max_qubits: int = DEFAULT_MAX_QUBITS) -> float:
    h = observable_matrix(obs, max_qubits)
    return float(np.linalg.eigvalsh(h)[0])


def expectation(state: StateVector, s: PauliString) -> float:
    """<state| P |state>, real by Hermiticity."""
    if s.width != state.width:
        raise InvalidInputError(
            f"string width {s.width} vs state width {state.width}"
        )
    return float(np.real(np.vdot(state.amplitudes, apply_pauli(s, state.amplitudes))))


def exact_theta(state: StateVector, s: PauliString) -> float:
    """Probability of the +1 outcome: (1 + <P>)/2."""
    return 0.5 * (1.0 + expectation(state, s))


def exact_mean(obs: Observable, state: StateVector) -> float:
    """Exact <O> on the state."""
    total = obs.identity_offset
    for t in obs.terms:
        total += t.coefficient * expectation(state, t.string)
    return total


def exact_pair_thetas(
    state: StateVector, a: PauliString, b: PauliString
) -> np.ndarray:
    """Joint outcome probabilities (++, +-, -+, --) for commuting a, b."""
    if not commutes(a, b):
        raise InvalidInputError("joint distribution needs commuting strings")
    v = state.amplitudes
    va = apply_pauli(a, v)
    vb = apply_pauli(b, v)
    vab = apply_pauli(a, vb)
    ea = np.real(np.vdot(v, va))
    eb = np.real(np.vdot(v, vb))
    eab = np.real(np.vdot(v, vab))
    out = np.array(
        [
            0.25 * (1 + ea + eb + eab),
            0.25 * (1 + ea - eb - eab),
            0.25 * (1 - ea + eb - eab),
            0.25 * (1 - ea - eb + eab),
        ]
    )
    return np.clip(out, 0.0, 1.0)


def _measure_in_place(v: np.ndarray, s: PauliString, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Projectively measure s on v; returns (projected state, outcome)."""
    pv = apply_pauli(s, v)
    theta = 0.5 * (1.0 + float(np.real(np.vdot(v, pv))))
    theta = min(1.0, max(0.0, theta))
    outcome = 1 if rng.random() < theta else -1
    v = 0.5 * (v + outcome * pv)
    nrm = np.linalg.norm(v)
    if nrm < _PROJECTION_NORM_TOL:
        raise NumericalError(
            f"projection onto outcome {outcome:+d} of {s.letters} annihilated the state"
        )
    return v / nrm, outcome


def sample_group_shot(
    state: StateVector,
    obs: Observable,
    group: Sequence[int],
    rng: np.random.Generator,
) -> ShotOutcome:
    """One simultaneous shot of a commuting group, by sequential projection.

    The joint outcome distribution is order-independent because the strings
    commute; measurement order is ascending term index for reproducibility.
    """
    indices = sorted(group)
    if not indices:
        raise InvalidInputError("empty group")
    strings = [obs.terms[i].string for i in indices]
    for s in strings:
        if s.width != state.width:
            raise InvalidInputError("group strings do not match the state width")
    for i in range(len(strings)):
        for j in range(i + 1, len(strings)):
            if not commutes(strings[i], strings[j]):
                raise InvalidInputError(
                    f"group is not commuting: {strings[i].letters} vs "
                    f"{strings[j].letters}"
                )
    v = state.amplitudes.copy()
    values = {}
    for idx, s in zip(indices, strings):
        v, outcome = _measure_in_place(v, s, rng)
        values[idx] = outcome
    return ShotOutcome(kind="group", values=values)


def sample_double_shot(
    state: StateVector,
    obs: Observable,
    rng: np.random.Generator,
    max_qubits: int = DEFAULT_MAX_QUBITS,
) -> ShotOutcome:
    """One shot of the doubled scheme: measure every P_i (x) P_i on state (x) state.

    The doubled operators commute pairwise regardless of the originals, so all
    p terms are read out in a single two-copy shot.
    """
    _check_cap(2 * state.width, 2 * max_qubits)
    if obs.width != state.width:
        raise InvalidInputError("observable width does not match the state")
    v = np.kron(state.amplitudes, state.amplitudes)
    values = {}
    for i, t in enumerate(obs.terms):
        v, outcome = _measure_in_place(v, double(t.string), rng)
        values[i] = outcome
    return ShotOutcome(kind="double", values=values)


def load_state_file(path, width: int | None = None) -> StateVector:
    """Read amplitudes from text lines "re im"; blank lines and # comments skipped."""
    amps = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise InvalidInputError(
                    f"{path}: line {lineno}: expected 're im', got {raw!r}"
                )
            try:
                amps.append(complex(float(fields[0]), float(fields[1])))
            except ValueError:
                raise InvalidInputError(
                    f"{path}: line {lineno}: unreadable amplitude {raw!r}"
                ) from None
    arr = np.asarray(amps, dtype=complex)
    nrm = np.linalg.norm(arr)
    if arr.size and abs(nrm - 1.0) > 1e-6:
        raise InvalidInputError(
            f"{path}: amplitudes have norm {nrm:.8f}, expected 1 within 1e-6"
        )
    if arr.size:
        arr = arr / nrm
    return StateVector(arr, width)
