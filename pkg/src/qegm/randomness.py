"""Randomness sources and latent noise injection.

Three interchangeable sources share one interface (``uniform`` / ``normal`` /
``spawn``):

* ``SeededPrng``: numpy PCG64 stream, bit-reproducible from the seed.
* ``SimulatedQrng``: every uniform is assembled from 53 Born-rule
  measurements of the one-qubit state R_y(pi/2)|0>. The measurements run on
  the statevector simulator, whose sampling is itself driven by a seeded
  PRNG, so this source is exactly as (un)certified as a PRNG. It exists to
  exercise the measurement path, not to supply entropy guarantees.
* ``EntropyFile``: consumes externally produced bytes, e.g. dumped from a
  hardware QRNG. Each uniform takes 8 bytes read as a little-endian uint64;
  the top 53 bits become the mantissa: ``(word >> 11) * 2**-53``. Running
  out of bytes raises ``EntropyExhaustedError``; there is no fallback.

Normals for the non-numpy sources use Box-Muller on pairs of uniforms.
"""
from __future__ import annotations

import math
import os
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EntropyExhaustedError, ValidationError
from .statevector import GateOp, ROT_Y, apply_gate, init_zero, sample_indices

SEEDED_PRNG = "SeededPrng"
SIMULATED_QRNG = "SimulatedQrng"
ENTROPY_FILE = "EntropyFile"
SOURCE_KINDS = (SEEDED_PRNG, SIMULATED_QRNG, ENTROPY_FILE)

_MANTISSA = 2.0**-53


def _derive_seed(seed: int, key) -> int:
    if isinstance(key, str):
        key = zlib.crc32(key.encode())
    ss = np.random.SeedSequence([seed & (2**64 - 1), int(key)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


class RandomnessSource:
    kind = ""

    def uniform(self, size=None):
        """Uniform draws in [0, 1); a float when ``size`` is None."""
        raise NotImplementedError

    def normal(self, size=None):
        shape = () if size is None else size
        count = int(np.prod(shape))
        u = self.uniform(2 * count) if count else np.empty(0)
        z = _box_muller(u[:count], u[count:]).reshape(shape)
        return float(z) if size is None else z

    def spawn(self, key) -> "RandomnessSource":
        """Independent child stream identified by ``key`` (int or str)."""
        raise NotImplementedError


class SeededPrng(RandomnessSource):
    kind = SEEDED_PRNG

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def spawn(self, key):
        return SeededPrng(_derive_seed(self.seed, key))


class SimulatedQrng(RandomnessSource):
    kind = SIMULATED_QRNG

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._measure_rng = SeededPrng(seed)
        plus = apply_gate(init_zero(1), GateOp(ROT_Y, 0, angle=math.pi / 2))
        self._probs = plus.probabilities

    def _bits(self, count: int) -> np.ndarray:
        return sample_indices(self._probs, self._measure_rng.uniform(count)).astype(np.uint64)

    def uniform(self, size=None):
        shape = () if size is None else size
        count = int(np.prod(shape))
        bits = self._bits(53 * count).reshape(count, 53)
        weights = np.uint64(1) << np.arange(52, -1, -1, dtype=np.uint64)
        words = (bits * weights).sum(axis=1, dtype=np.uint64)
        out = (words.astype(np.float64) * _MANTISSA).reshape(shape)
        return float(out) if size is None else out

    def spawn(self, key):
        return SimulatedQrng(_derive_seed(self.seed, key))


class EntropyFile(RandomnessSource):
    kind = ENTROPY_FILE

    def __init__(self, path):
        self.path = os.fspath(path)
        with open(self.path, "rb") as fh:
            self._data = fh.read()
        self._offset = 0

    @property
    def remaining_uniforms(self) -> int:
        return (len(self._data) - self._offset) // 8

    def uniform(self, size=None):
        shape = () if size is None else size
        count = int(np.prod(shape))
        need = 8 * count
        if self._offset + need > len(self._data):
            raise EntropyExhaustedError(
                f"{self.path}: requested {count} uniforms, only {self.remaining_uniforms} left"
            )
        words = np.frombuffer(self._data, dtype="<u8", count=count, offset=self._offset)
        self._offset += need
        out = ((words >> np.uint64(11)).astype(np.float64) * _MANTISSA).reshape(shape)
        return float(out) if size is None else out

    def spawn(self, key):
        raise ConfigurationError("an entropy file cannot be split into independent streams")


def make_source(kind: str, seed: int = 0, path=None) -> RandomnessSource:
    if kind == SEEDED_PRNG:
        return SeededPrng(seed)
    if kind == SIMULATED_QRNG:
        return SimulatedQrng(seed)
    if kind == ENTROPY_FILE:
        if path is None:
            raise ConfigurationError("EntropyFile source needs a file path")
        return EntropyFile(path)
    raise ConfigurationError(f"unknown randomness source {kind!r}; expected one of {SOURCE_KINDS}")


@dataclass(frozen=True)
class NoiseDraw:
    epsilon: np.ndarray
    r_value: float
    sigma: float


def draw_noise(src: RandomnessSource, dim: int, sigma: float) -> NoiseDraw:
    """One modulating draw r, then ``dim`` Gaussians with std sigma*sqrt(r)."""
    if not sigma >= 0:
        raise ValidationError(f"sigma must be >= 0, got {sigma}")
    r = float(src.uniform())
    eps = np.asarray(src.normal(dim), dtype=np.float64) * (sigma * math.sqrt(r))
    return NoiseDraw(eps, r, float(sigma))


def draw_noise_batch(src: RandomnessSource, count: int, dim: int, sigma: float) -> np.ndarray:
    """``count`` sequential ``draw_noise`` calls stacked into (count, dim)."""
    out = np.zeros((count, dim))
    for i in range(count):
        out[i] = draw_noise(src, dim, sigma).epsilon
    return out
