import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qegm import statevector as sv
from qegm.errors import ConfigurationError, ValidationError
from qegm.randomness import SeededPrng


def basis(n, index):
    amps = np.zeros(2**n, dtype=complex)
    amps[index] = 1.0
    return sv.Statevector(n, amps)


def random_gates(n, count, rng):
    gates = []
    for _ in range(count):
        kind = rng.choice([sv.ROT_Y, sv.ROT_Z, sv.CNOT]) if n > 1 else rng.choice([sv.ROT_Y, sv.ROT_Z])
        if kind == sv.CNOT:
            c, t = rng.choice(n, size=2, replace=False)
            gates.append(sv.GateOp(sv.CNOT, int(t), control=int(c)))
        else:
            gates.append(sv.GateOp(kind, int(rng.integers(n)), angle=float(rng.uniform(-2 * np.pi, 2 * np.pi))))
    return gates


def random_state(n, rng):
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return sv.Statevector(n, amps / np.linalg.norm(amps))


@pytest.mark.parametrize("n", [1, 2, 4])
def test_init_zero(n):
    s = sv.init_zero(n)
    assert s.amplitudes.shape == (2**n,)
    assert s.amplitudes[0] == 1 and np.count_nonzero(s.amplitudes) == 1


@pytest.mark.parametrize("n", [0, 13, -1])
def test_init_zero_rejects_out_of_range(n):
    with pytest.raises(ConfigurationError, match="12"):
        sv.init_zero(n)


def test_amplitude_count_must_match():
    with pytest.raises(ValidationError):
        sv.Statevector(2, np.ones(3))


def test_state_is_read_only():
    s = sv.init_zero(2)
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0


def test_ry_pi_flips_zero():
    s = sv.apply_gate(sv.init_zero(1), sv.GateOp(sv.ROT_Y, 0, angle=math.pi))
    assert np.allclose(s.amplitudes, [0, 1], atol=1e-15)


def test_ry_matrix_convention():
    theta = 0.7
    s = sv.apply_gate(basis(1, 1), sv.GateOp(sv.ROT_Y, 0, angle=theta))
    # second column of [[c, -s], [s, c]]
    assert np.allclose(s.amplitudes, [-math.sin(theta / 2), math.cos(theta / 2)], atol=1e-15)


def test_rz_phases():
    theta = 1.1
    plus = sv.Statevector(1, np.array([1, 1]) / math.sqrt(2))
    s = sv.apply_gate(plus, sv.GateOp(sv.ROT_Z, 0, angle=theta))
    expected = np.array([np.exp(-0.5j * theta), np.exp(0.5j * theta)]) / math.sqrt(2)
    assert np.allclose(s.amplitudes, expected, atol=1e-15)


@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi, -2.0])
def test_rz_on_zero_keeps_population(theta):
    s = sv.apply_gate(sv.init_zero(1), sv.GateOp(sv.ROT_Z, 0, angle=theta))
    assert abs(abs(s.amplitudes[0]) ** 2 - 1) < 1e-15


def test_cnot_on_10_gives_11():
    s = sv.apply_gate(basis(2, 0b10), sv.GateOp(sv.CNOT, target=1, control=0))
    assert np.allclose(s.amplitudes, basis(2, 0b11).amplitudes)


def test_cnot_leaves_control_zero_alone():
    s = sv.apply_gate(basis(2, 0b01), sv.GateOp(sv.CNOT, target=1, control=0))
    assert np.allclose(s.amplitudes, basis(2, 0b01).amplitudes)


def test_qubit0_is_most_significant():
    s = sv.apply_gate(sv.init_zero(3), sv.GateOp(sv.ROT_Y, 0, angle=math.pi))
    assert abs(s.amplitudes[0b100]) == pytest.approx(1.0)


def test_cnot_matches_dense_matrix(rng):
    n = 3
    for control in range(n):
        for target in range(n):
            if control == target:
                continue
            dense = np.zeros((8, 8))
            for i in range(8):
                bits = [(i >> (n - 1 - q)) & 1 for q in range(n)]
                if bits[control]:
                    bits[target] ^= 1
                j = sum(b << (n - 1 - q) for q, b in enumerate(bits))
                dense[j, i] = 1
            state = random_state(n, rng)
            out = sv.apply_gate(state, sv.GateOp(sv.CNOT, target, control=control))
            assert np.allclose(out.amplitudes, dense @ state.amplitudes, atol=1e-15)


def test_rotation_matches_kron_construction(rng):
    n, q, theta = 3, 1, 0.4
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    full = np.kron(np.kron(np.eye(2), np.array([[c, -s], [s, c]])), np.eye(2))
    state = random_state(n, rng)
    out = sv.apply_gate(state, sv.GateOp(sv.ROT_Y, q, angle=theta))
    assert np.allclose(out.amplitudes, full @ state.amplitudes, atol=1e-15)


def test_invalid_indices():
    with pytest.raises(IndexError):
        sv.apply_gate(sv.init_zero(2), sv.GateOp(sv.ROT_Y, 2, angle=0.1))
    with pytest.raises(IndexError):
        sv.apply_gate(sv.init_zero(2), sv.GateOp(sv.CNOT, 0, control=5))
    with pytest.raises(IndexError):
        sv.expectation_z(sv.init_zero(2), 3)


def test_gateop_validation():
    with pytest.raises(ValidationError):
        sv.GateOp(sv.ROT_Y, 0, angle=float("nan"))
    with pytest.raises(ValidationError):
        sv.GateOp(sv.CNOT, 1, control=1)
    with pytest.raises(ValidationError):
        sv.GateOp(sv.CNOT, 1)
    with pytest.raises(ValidationError):
        sv.GateOp("Hadamard", 0)


def test_expectation_on_basis_states():
    assert sv.expectation_z(sv.init_zero(1), 0) == 1.0
    assert sv.expectation_z(basis(1, 1), 0) == -1.0
    s = basis(3, 0b010)
    assert [sv.expectation_z(s, q) for q in range(3)] == [1.0, -1.0, 1.0]


@pytest.mark.parametrize("theta", [0.0, math.pi / 4, math.pi / 2, math.pi])
def test_expectation_after_ry_is_cos(theta):
    s = sv.apply_gate(sv.init_zero(1), sv.GateOp(sv.ROT_Y, 0, angle=theta))
    assert sv.expectation_z(s, 0) == pytest.approx(math.cos(theta), abs=1e-15)


def test_norm_preserved_over_random_sequences(rng):
    for n in range(1, 7):
        for _ in range(5):
            s = sv.apply_gates(sv.init_zero(n), random_gates(n, 100, rng))
            assert abs(s.norm - 1) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.floats(-10, 10), st.integers(0, 2**31 - 1))
def test_rotation_inverse(n, theta, seed):
    rng = np.random.default_rng(seed)
    state = random_state(n, rng)
    q = int(rng.integers(n))
    for kind in (sv.ROT_Y, sv.ROT_Z):
        back = sv.apply_gates(state, [sv.GateOp(kind, q, angle=theta), sv.GateOp(kind, q, angle=-theta)])
        assert np.max(np.abs(back.amplitudes - state.amplitudes)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_cnot_involution(n, seed):
    rng = np.random.default_rng(seed)
    state = random_state(n, rng)
    c, t = rng.choice(n, size=2, replace=False)
    g = sv.GateOp(sv.CNOT, int(t), control=int(c))
    back = sv.apply_gates(state, [g, g])
    assert np.max(np.abs(back.amplitudes - state.amplitudes)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_expectations_bounded(n, seed):
    rng = np.random.default_rng(seed)
    s = sv.apply_gates(sv.init_zero(n), random_gates(n, 20, rng))
    for q in range(n):
        assert -1 - 1e-12 <= sv.expectation_z(s, q) <= 1 + 1e-12


def test_sampling_deterministic_states():
    assert set(sv.sample_bitstrings(sv.init_zero(3), 50, SeededPrng(0))) == {"000"}
    assert set(sv.sample_bitstrings(basis(2, 0b11), 50, SeededPrng(0))) == {"11"}


def test_sampling_rejects_zero_shots():
    with pytest.raises(ValidationError):
        sv.sample_bitstrings(sv.init_zero(1), 0, SeededPrng(0))


def test_uniform_qubit_frequency():
    s = sv.apply_gate(sv.init_zero(1), sv.GateOp(sv.ROT_Y, 0, angle=math.pi / 2))
    draws = sv.sample_bitstrings(s, 100_000, SeededPrng(3))
    freq = draws.count("1") / len(draws)
    assert 0.494 <= freq <= 0.506


def test_born_frequencies_multi_qubit(rng):
    n, shots = 3, 100_000
    s = sv.apply_gates(sv.init_zero(n), random_gates(n, 30, rng))
    draws = sv.sample_bitstrings(s, shots, SeededPrng(11))
    counts = np.bincount([int(b, 2) for b in draws], minlength=2**n)
    p = s.probabilities
    bound = 4 * np.sqrt(shots * p * (1 - p))
    assert np.all(np.abs(counts - shots * p) <= bound + 1e-9)


def test_sampling_reproducible():
    s = sv.Statevector(2, np.full(4, 0.5))
    assert sv.sample_bitstrings(s, 20, SeededPrng(5)) == sv.sample_bitstrings(s, 20, SeededPrng(5))


def test_batched_kernels_match_single_state(rng):
    n, batch = 3, 5
    amps = np.stack([random_state(n, rng).amplitudes for _ in range(batch)])
    angles = rng.uniform(-3, 3, size=batch)
    out = sv.rz(sv.ry(amps, n, 2, angles), n, 0, angles)
    for b in range(batch):
        ref = sv.apply_gates(sv.Statevector(n, amps[b]),
                             [sv.GateOp(sv.ROT_Y, 2, angle=angles[b]), sv.GateOp(sv.ROT_Z, 0, angle=angles[b])])
        assert np.allclose(out[b], ref.amplitudes, atol=1e-14)
