"""Variational quantum layer: encoding, hardware-efficient ansatz, shift-rule gradients.

Circuit per sample: encode the latent vector, then for each layer apply
R_y then R_z to every qubit followed by the linear CNOT chain
(0,1), (1,2), ..., (n-2, n-1). The layer output is the vector of per-qubit
<Z> expectations, computed exactly from the statevector.

Angles are stored as an array of shape (depth, n_qubits, 2) with slot 0 the
R_y angle and slot 1 the R_z angle. Gate counting treats the R_y R_z pair on
a qubit as one fused rotation slot, so a layer has n rotation slots and n-1
entanglers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import statevector as sv
from .errors import DegenerateDataError, ShapeError, ValidationError

FEATURE_MAP = "FeatureMap"
AMPLITUDE = "Amplitude"
ENCODINGS = (FEATURE_MAP, AMPLITUDE)

SHIFT = math.pi / 2


def qubits_for_amplitude(d: int) -> int:
    """Qubits needed to amplitude-encode ``d`` values: ceil(log2 d), at least 1."""
    if d < 1:
        raise ValidationError(f"latent dimension must be >= 1, got {d}")
    return max(1, math.ceil(math.log2(d)))


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    depth: int
    encoding: str = FEATURE_MAP

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValidationError(f"encoding must be one of {ENCODINGS}, got {self.encoding!r}")
        if not 1 <= self.n_qubits <= sv.MAX_QUBITS:
            raise ValidationError(f"n_qubits must be in [1, {sv.MAX_QUBITS}], got {self.n_qubits}")
        if self.depth < 1:
            raise ValidationError(f"depth must be >= 1, got {self.depth}")

    @classmethod
    def for_latent(cls, d: int, depth: int, encoding: str = FEATURE_MAP) -> "AnsatzSpec":
        n = d if encoding == FEATURE_MAP else qubits_for_amplitude(d)
        return cls(n, depth, encoding)

    @property
    def param_shape(self) -> tuple:
        return (self.depth, self.n_qubits, 2)

    @property
    def n_params(self) -> int:
        return self.depth * self.n_qubits * 2

    def accepts_latent(self, d: int) -> bool:
        if self.encoding == FEATURE_MAP:
            return d == self.n_qubits
        return 1 <= d <= 2**self.n_qubits


def gate_counts(spec: AnsatzSpec) -> tuple[int, int]:
    """(rotation slots, entangling gates) for one forward pass of the ansatz."""
    return spec.depth * spec.n_qubits, spec.depth * (spec.n_qubits - 1)


def init_params(spec: AnsatzSpec, src, scale: float = 0.1) -> np.ndarray:
    """Angles uniform in [-scale, scale)."""
    u = np.asarray(src.uniform(spec.n_params), dtype=np.float64)
    return ((2.0 * u - 1.0) * scale).reshape(spec.param_shape)


def _check_params(params: np.ndarray, spec: AnsatzSpec) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape[-3:] != spec.param_shape:
        raise ShapeError(f"quantum params must have shape {spec.param_shape}, got {params.shape}")
    if not np.all(np.isfinite(params)):
        raise ValidationError("quantum params contain non-finite values")
    return params


def _check_latent(z: np.ndarray, spec: AnsatzSpec) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if not spec.accepts_latent(z.shape[1]):
        raise ShapeError(
            f"{spec.encoding} encoding on {spec.n_qubits} qubits cannot take latent dimension {z.shape[1]}"
        )
    if not np.all(np.isfinite(z)):
        raise ValidationError("latent vector contains non-finite values")
    return z


# ---------------------------------------------------------------------------
# batched circuit primitives


def _encode_batch(z: np.ndarray, spec: AnsatzSpec) -> np.ndarray:
    n = spec.n_qubits
    if spec.encoding == FEATURE_MAP:
        amps = np.zeros((z.shape[0], 2**n), dtype=np.complex128)
        amps[:, 0] = 1.0
        for q in range(n):
            amps = sv.ry(amps, n, q, z[:, q])
        return amps
    padded = np.zeros((z.shape[0], 2**n))
    padded[:, : z.shape[1]] = z
    norms = np.linalg.norm(padded, axis=1)
    if np.any(norms == 0):
        raise DegenerateDataError("amplitude encoding of an all-zero latent vector")
    return (padded / norms[:, None]).astype(np.complex128)


def _ansatz_batch(amps: np.ndarray, params: np.ndarray, spec: AnsatzSpec) -> np.ndarray:
    """Gate-by-gate ansatz. ``params`` is (L, n, 2) for every row or (batch, L, n, 2) per row."""
    n = spec.n_qubits
    per_row = params.ndim == 4
    for layer in range(spec.depth):
        for q in range(n):
            ty = params[:, layer, q, 0] if per_row else params[layer, q, 0]
            tz = params[:, layer, q, 1] if per_row else params[layer, q, 1]
            amps = sv.apply_1q(amps, n, q, sv.ryz_matrices(ty, tz, amps.shape[0]))
        for q in range(n - 1):
            amps = sv.cnot(amps, n, q, q + 1)
    return amps


# Above this size the per-layer unitaries cost more than gate-by-gate updates.
FUSED_MAX_QUBITS = 6


def _chain_permutation(n: int) -> np.ndarray:
    """perm with (CNOT-chain @ v)[i] == v[perm[i]]."""
    basis = np.eye(2**n, dtype=np.complex128)
    for q in range(n - 1):
        basis = sv.cnot(basis, n, q, q + 1)
    image = np.argmax(np.abs(basis), axis=1)
    perm = np.empty_like(image)
    perm[image] = np.arange(2**n)
    return perm


def _layer_unitaries(layer_params: np.ndarray, n: int, perm: np.ndarray) -> np.ndarray:
    """(S, n, 2) angles -> (S, 2**n, 2**n) unitaries of one full ansatz layer."""
    s = layer_params.shape[0]
    u = np.ones((s, 1, 1), dtype=np.complex128)
    for q in range(n):
        m = sv.ryz_matrices(layer_params[:, q, 0], layer_params[:, q, 1], s)
        u = np.einsum("sij,skl->sikjl", u, m).reshape(s, 2 ** (q + 1), 2 ** (q + 1))
    return u[:, perm, :]


def _ansatz_settings(amps: np.ndarray, settings: np.ndarray, spec: AnsatzSpec) -> np.ndarray:
    """Run every parameter setting against every row.

    ``amps`` is (B, 2**n); ``settings`` is (S, L, n, 2). Returns (S, B, 2**n).
    """
    n = spec.n_qubits
    s = settings.shape[0]
    if n > FUSED_MAX_QUBITS:
        rows = np.tile(amps, (s, 1))
        per_row = np.repeat(settings, amps.shape[0], axis=0)
        return _ansatz_batch(rows, per_row, spec).reshape(s, amps.shape[0], -1)
    perm = _chain_permutation(n)
    out = np.broadcast_to(amps, (s,) + amps.shape)
    for layer in range(spec.depth):
        u = _layer_unitaries(settings[:, layer], n, perm)
        out = np.matmul(out, u.transpose(0, 2, 1))
    return out


def run_circuits(z: np.ndarray, params: np.ndarray, spec: AnsatzSpec) -> np.ndarray:
    """Per-qubit <Z>.

    ``params`` of shape (L, n, 2) gives (batch, n); a stack of settings
    (S, L, n, 2) gives (S, batch, n), every setting run on every latent.
    """
    amps = _encode_batch(z, spec)
    stacked = params.ndim == 4
    settings = params if stacked else params[None]
    out = _ansatz_settings(amps, settings, spec)
    e = sv.z_expectations(out.reshape(-1, out.shape[-1]), spec.n_qubits).reshape(out.shape[0], out.shape[1], -1)
    return e if stacked else e[0]


class QuantumLayer:
    """Batched forward pass and shift-rule gradients with evaluation bookkeeping.

    ``evaluations`` counts distinct parameter settings of the ansatz that were
    executed (one per forward pass, two per shifted parameter), regardless of
    how many latent vectors ride along in the batch. Input-shift evaluations
    used for the encoder gradient are tallied separately in
    ``input_evaluations``.
    """

    def __init__(self, spec: AnsatzSpec):
        self.spec = spec
        self.evaluations = 0
        self.input_evaluations = 0

    def reset_counters(self) -> None:
        self.evaluations = 0
        self.input_evaluations = 0

    def forward(self, z: np.ndarray, params: np.ndarray) -> np.ndarray:
        z = _check_latent(z, self.spec)
        params = _check_params(params, self.spec)
        self.evaluations += 1
        return run_circuits(z, params, self.spec)

    def param_grad(self, z: np.ndarray, params: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """sum_b sum_i upstream[b, i] * d<Z_i>(z_b)/d theta, shaped like params."""
        spec = self.spec
        z = _check_latent(z, spec)
        params = _check_params(params, spec)
        upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if upstream.shape != (z.shape[0], spec.n_qubits):
            raise ShapeError(f"upstream must have shape {(z.shape[0], spec.n_qubits)}, got {upstream.shape}")
        n_par = spec.n_params
        flat = params.reshape(-1)
        shifted = np.tile(flat, (2 * n_par, 1))
        k = np.arange(n_par)
        shifted[2 * k, k] += SHIFT
        shifted[2 * k + 1, k] -= SHIFT
        batch = z.shape[0]
        self.evaluations += 2 * n_par
        e = run_circuits(z, shifted.reshape((2 * n_par,) + spec.param_shape), spec)
        e = e.reshape(n_par, 2, batch, spec.n_qubits)
        d = 0.5 * (e[:, 0] - e[:, 1])
        grad = np.einsum("kbi,bi->k", d, upstream)
        return grad.reshape(spec.param_shape)

    def input_vjp(self, z: np.ndarray, params: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """upstream @ d z_q / d z per row, via the shift rule on the encoding angles."""
        spec = self.spec
        if spec.encoding != FEATURE_MAP:
            raise ValidationError("input gradients need FeatureMap encoding (angles as inputs)")
        z = _check_latent(z, spec)
        params = _check_params(params, spec)
        batch, d = z.shape
        shifted = np.repeat(z[None, :, :], 2 * d, axis=0)
        j = np.arange(d)
        shifted[2 * j, :, j] += SHIFT
        shifted[2 * j + 1, :, j] -= SHIFT
        self.input_evaluations += 2 * d
        e = run_circuits(shifted.reshape(-1, d), params, spec).reshape(d, 2, batch, spec.n_qubits)
        jac = 0.5 * (e[:, 0] - e[:, 1])  # (d, batch, n)
        return np.einsum("jbi,bi->bj", jac, np.atleast_2d(upstream))


# ---------------------------------------------------------------------------
# single-sample API


def encode_feature_map(z) -> sv.Statevector:
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    spec = AnsatzSpec(len(z), 1, FEATURE_MAP)
    amps = _encode_batch(_check_latent(z, spec), spec)
    return sv.Statevector(spec.n_qubits, amps[0])


def encode_amplitude(z) -> sv.Statevector:
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    spec = AnsatzSpec(qubits_for_amplitude(len(z)), 1, AMPLITUDE)
    amps = _encode_batch(_check_latent(z, spec), spec)
    return sv.Statevector(spec.n_qubits, amps[0])


def apply_ansatz(state: sv.Statevector, params) -> sv.Statevector:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 3 or params.shape[1:] != (state.n_qubits, 2):
        raise ShapeError(f"params must have shape (L, {state.n_qubits}, 2), got {params.shape}")
    spec = AnsatzSpec(state.n_qubits, params.shape[0])
    params = _check_params(params, spec)
    amps = _ansatz_batch(np.array(state.amplitudes)[None, :], params, spec)
    return sv.Statevector(state.n_qubits, amps[0])


def quantum_forward(z, params, spec: AnsatzSpec, layer: QuantumLayer | None = None) -> np.ndarray:
    layer = layer or QuantumLayer(spec)
    return layer.forward(np.asarray(z, dtype=np.float64)[None, :], params)[0]


def parameter_shift_grad(z, params, spec: AnsatzSpec, upstream, layer: QuantumLayer | None = None) -> np.ndarray:
    layer = layer or QuantumLayer(spec)
    return layer.param_grad(
        np.asarray(z, dtype=np.float64)[None, :], params, np.asarray(upstream, dtype=np.float64)[None, :]
    )


def estimate_z_from_shots(z: np.ndarray, params: np.ndarray, spec: AnsatzSpec, shots: int, src) -> np.ndarray:
    """Shot-estimated per-qubit <Z>, one measurement record of ``shots`` per latent row."""
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    z = _check_latent(z, spec)
    amps = _ansatz_batch(_encode_batch(z, spec), _check_params(params, spec), spec)
    n = spec.n_qubits
    bit_sign = 1.0 - 2.0 * ((np.arange(2**n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1)
    out = np.empty((z.shape[0], n))
    for b in range(z.shape[0]):
        probs = amps[b].real ** 2 + amps[b].imag ** 2
        idx = sv.sample_indices(probs, np.asarray(src.uniform(shots)))
        out[b] = bit_sign[idx].mean(axis=0)
    return out
