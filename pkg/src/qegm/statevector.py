"""Dense statevector simulator for the RotY / RotZ / CNOT gate set.

Qubit 0 is the most significant bit of a basis index, so for two qubits the
bitstring "10" means qubit 0 is |1> and qubit 1 is |0> (index 2).

Two layers live here. The ``Statevector`` / ``GateOp`` API works on single
states and validates everything. The ``ry`` / ``rz`` / ``cnot`` /
``z_expectations`` kernels work on raw batched arrays of shape
``(batch, 2**n)`` with per-row angles; the circuit layer uses those to run
many circuits in one numpy call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError

MAX_QUBITS = 12
NORM_TOL = 1e-10

ROT_Y = "RotY"
ROT_Z = "RotZ"
CNOT = "CNOT"
GATE_KINDS = (ROT_Y, ROT_Z, CNOT)


@dataclass(frozen=True)
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 2**self.n_qubits:
            raise ValidationError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got {amps.shape[0]}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.probabilities.sum()))


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    control: Optional[int] = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        if self.kind == CNOT:
            if self.control is None:
                raise ValidationError("CNOT needs a control qubit")
            if self.control == self.target:
                raise ValidationError("CNOT control and target must differ")
        elif math.isnan(self.angle):
            raise ValidationError(f"{self.kind} angle is NaN")


def _check_qubit_count(n_qubits: int) -> None:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits!r}")


def _check_index(qubit: int, n_qubits: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise IndexError(f"qubit index {qubit} out of range for {n_qubits} qubits")


# ---------------------------------------------------------------------------
# batched kernels: amps has shape (batch, 2**n); angles are scalars or (batch,)


def _split(amps: np.ndarray, n: int, qubit: int) -> np.ndarray:
    return amps.reshape(amps.shape[0], 2**qubit, 2, 2 ** (n - qubit - 1))


def _row_angles(theta, batch: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(theta, dtype=np.float64), (batch,))


def apply_1q(amps: np.ndarray, n: int, qubit: int, mats: np.ndarray) -> np.ndarray:
    """Apply per-row 2x2 matrices ``mats`` (batch, 2, 2) to ``qubit``."""
    v = _split(amps, n, qubit)
    return np.matmul(mats[:, None, :, :], v).reshape(amps.shape)


def ry_matrices(theta, batch: int) -> np.ndarray:
    half = _row_angles(theta, batch) / 2.0
    c, s = np.cos(half), np.sin(half)
    m = np.empty((batch, 2, 2), dtype=np.complex128)
    m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1] = c, -s, s, c
    return m


def rz_matrices(theta, batch: int) -> np.ndarray:
    phase = np.exp(0.5j * _row_angles(theta, batch))
    m = np.zeros((batch, 2, 2), dtype=np.complex128)
    m[:, 0, 0], m[:, 1, 1] = phase.conj(), phase
    return m


def ryz_matrices(theta_y, theta_z, batch: int) -> np.ndarray:
    """R_z(theta_z) @ R_y(theta_y): R_y applied first."""
    m = ry_matrices(theta_y, batch)
    phase = np.exp(0.5j * _row_angles(theta_z, batch))
    m[:, 0, :] *= phase.conj()[:, None]
    m[:, 1, :] *= phase[:, None]
    return m


def ry(amps: np.ndarray, n: int, qubit: int, theta) -> np.ndarray:
    """Apply R_y(theta) to ``qubit`` of every row."""
    return apply_1q(amps, n, qubit, ry_matrices(theta, amps.shape[0]))


def rz(amps: np.ndarray, n: int, qubit: int, theta) -> np.ndarray:
    """Apply R_z(theta) = diag(exp(-i theta/2), exp(i theta/2)) to ``qubit``."""
    return apply_1q(amps, n, qubit, rz_matrices(theta, amps.shape[0]))


def cnot(amps: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    """Flip ``target`` on the rows' components where ``control`` is 1."""
    t = amps.reshape((amps.shape[0],) + (2,) * n)
    out = t.copy()
    one = [slice(None)] * (n + 1)
    one[1 + control] = 1
    src0, src1 = list(one), list(one)
    src0[1 + target] = 0
    src1[1 + target] = 1
    out[tuple(src0)] = t[tuple(src1)]
    out[tuple(src1)] = t[tuple(src0)]
    return out.reshape(amps.shape)


def z_expectations(amps: np.ndarray, n: int) -> np.ndarray:
    """Per-qubit <Z> for every row, shape (batch, n)."""
    probs = (amps.real**2 + amps.imag**2).reshape((amps.shape[0],) + (2,) * n)
    out = np.empty((amps.shape[0], n))
    for q in range(n):
        axes = tuple(a for a in range(1, n + 1) if a != q + 1)
        marg = probs.sum(axis=axes) if axes else probs
        out[:, q] = marg[:, 0] - marg[:, 1]
    return out


# ---------------------------------------------------------------------------
# single-state API


def init_zero(n_qubits: int) -> Statevector:
    _check_qubit_count(n_qubits)
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(n_qubits, amps)


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    n = state.n_qubits
    _check_index(gate.target, n)
    amps = state.amplitudes[None, :]
    if gate.kind == ROT_Y:
        out = ry(amps, n, gate.target, gate.angle)
    elif gate.kind == ROT_Z:
        out = rz(amps, n, gate.target, gate.angle)
    else:
        _check_index(gate.control, n)
        out = cnot(amps, n, gate.control, gate.target)
    return Statevector(n, out[0])


def apply_gates(state: Statevector, gates: Sequence[GateOp]) -> Statevector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def expectation_z(state: Statevector, qubit: int) -> float:
    _check_index(qubit, state.n_qubits)
    return float(z_expectations(state.amplitudes[None, :], state.n_qubits)[0, qubit])


def sample_indices(probabilities: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF Born sampling of basis indices from uniform draws in [0, 1)."""
    cdf = np.cumsum(probabilities)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, uniforms, side="right")
    return np.minimum(idx, len(probabilities) - 1)


def sample_bitstrings(state: Statevector, shots: int, rng) -> list[str]:
    """Draw ``shots`` i.i.d. measurement outcomes, qubit 0 leftmost."""
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    idx = sample_indices(state.probabilities, rng.uniform(shots))
    width = state.n_qubits
    return [format(int(i), f"0{width}b") for i in idx]
