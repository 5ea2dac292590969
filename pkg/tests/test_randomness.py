import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qegm.errors import ConfigurationError, EntropyExhaustedError, ValidationError
from qegm.randomness import (EntropyFile, RandomnessSource, SeededPrng, SimulatedQrng, draw_noise,
                             draw_noise_batch, make_source)


class ZeroR(RandomnessSource):
    """Stub whose uniforms are all 0, so r = 0."""

    def uniform(self, size=None):
        return 0.0 if size is None else np.zeros(size)


def test_seeded_prng_reproducible():
    assert np.array_equal(SeededPrng(42).uniform(1000), SeededPrng(42).uniform(1000))
    assert not np.array_equal(SeededPrng(42).uniform(10), SeededPrng(43).uniform(10))


@pytest.mark.parametrize("source", [SeededPrng(1), SimulatedQrng(1)])
def test_uniform_mean(source):
    n = 100_000 if isinstance(source, SeededPrng) else 20_000
    u = source.uniform(n)
    assert np.all((u >= 0) & (u < 1))
    bound = 4 * np.sqrt(1 / 12 / n)
    assert abs(u.mean() - 0.5) <= bound


def test_simulated_qrng_reproducible_and_distinct():
    a = SimulatedQrng(5).uniform(50)
    assert np.array_equal(a, SimulatedQrng(5).uniform(50))
    assert not np.array_equal(a, SimulatedQrng(6).uniform(50))


def test_spawn_gives_independent_reproducible_streams():
    root = SeededPrng(0)
    a, b = root.spawn("noise").uniform(5), root.spawn("shuffle").uniform(5)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, SeededPrng(0).spawn("noise").uniform(5))


def test_entropy_file_decoding(tmp_path):
    words = [0, 2**64 - 1, 1 << 63]
    path = tmp_path / "bytes.bin"
    path.write_bytes(b"".join(struct.pack("<Q", w) for w in words))
    u = EntropyFile(path).uniform(3)
    assert u[0] == 0.0
    assert u[1] == (2**53 - 1) / 2**53
    assert u[2] == 0.5


def test_entropy_file_exhaustion(tmp_path):
    path = tmp_path / "bytes.bin"
    path.write_bytes(bytes(8))
    src = EntropyFile(path)
    with pytest.raises(EntropyExhaustedError):
        src.uniform(3)
    assert src.uniform() == 0.0
    with pytest.raises(EntropyExhaustedError):
        src.uniform()


def test_entropy_file_cannot_spawn(tmp_path):
    path = tmp_path / "bytes.bin"
    path.write_bytes(bytes(16))
    with pytest.raises(ConfigurationError):
        EntropyFile(path).spawn("x")


def test_make_source():
    assert isinstance(make_source("SeededPrng", 1), SeededPrng)
    assert isinstance(make_source("SimulatedQrng", 1), SimulatedQrng)
    with pytest.raises(ConfigurationError):
        make_source("EntropyFile")
    with pytest.raises(ConfigurationError):
        make_source("Dice")


def test_sources_are_substitutable():
    for src in (SeededPrng(2), SimulatedQrng(2)):
        draw = draw_noise(src, 3, 0.5)
        assert draw.epsilon.shape == (3,) and 0 <= draw.r_value < 1
        assert np.asarray(src.normal((2, 2))).shape == (2, 2)


def test_zero_sigma_gives_zero_noise():
    assert np.all(draw_noise(SeededPrng(0), 4, 0.0).epsilon == 0)


def test_zero_r_gives_zero_noise():
    draw = draw_noise(ZeroR(), 4, 2.0)
    assert draw.r_value == 0 and np.all(draw.epsilon == 0)


def test_negative_sigma_rejected():
    with pytest.raises(ValidationError):
        draw_noise(SeededPrng(0), 2, -0.1)


def test_noise_variance_law():
    eps = draw_noise_batch(SeededPrng(2024), 100_000, 1, 1.0)
    assert abs(eps.var() - 0.5) <= 0.02


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 5.0), st.integers(0, 2**31 - 1))
def test_noise_scales_with_sigma_and_r(sigma, seed):
    a = draw_noise(SeededPrng(seed), 3, sigma)
    b = draw_noise(SeededPrng(seed), 3, 1.0)
    assert a.r_value == b.r_value
    assert np.allclose(a.epsilon, sigma * b.epsilon, rtol=1e-12, atol=0)
    assert np.all(np.abs(a.epsilon) <= sigma * np.sqrt(a.r_value) * 40)
