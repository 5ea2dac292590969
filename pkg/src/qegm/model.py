"""The hybrid generative model: encoder -> noise -> quantum layer -> decoder.

In ``Quantum`` mode the noisy latent passes through the variational circuit
and the decoder sees per-qubit <Z> values. ``ClassicalBaseline`` mode is the
same network with the quantum layer removed: the decoder sees the noisy
latent directly. Everything else (architecture, noise path, loss, optimizer)
is shared, so the two differ only by the quantum map.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericError, ShapeError, ValidationError
from .neural import Adam, GaussianHead, Mlp
from .randomness import SeededPrng, draw_noise_batch
from .vqc import FEATURE_MAP, AnsatzSpec, QuantumLayer, estimate_z_from_shots, init_params

QUANTUM = "Quantum"
BASELINE = "ClassicalBaseline"
MODES = (QUANTUM, BASELINE)

CHECKPOINT_FORMAT = "qegm-checkpoint"
CHECKPOINT_VERSION = 1

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class LossConfig:
    lambda_rec: float = 1.0
    lambda_tail: float = 1.0

    def __post_init__(self):
        if self.lambda_rec < 0 or self.lambda_tail < 0 or self.lambda_rec + self.lambda_tail <= 0:
            raise ValidationError(
                f"loss weights must be >= 0 with a positive sum, got ({self.lambda_rec}, {self.lambda_tail})"
            )


@dataclass(frozen=True)
class LossTerms:
    hybrid: float
    rec: float
    tail: float


class QegmModel:
    def __init__(self, encoder: Mlp, decoder: Mlp, mode: str = QUANTUM, spec: Optional[AnsatzSpec] = None,
                 qparams: Optional[np.ndarray] = None, noise_sigma: float = 0.1, quantum_input_grad: bool = True):
        if mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
        self.encoder = encoder
        self.decoder = decoder
        self.mode = mode
        self.noise_sigma = float(noise_sigma)
        self.quantum_input_grad = bool(quantum_input_grad)
        self.d_x = encoder.dims[0]
        self.latent_dim = encoder.dims[-1]
        if decoder.dims[-1] != 2 * self.d_x:
            raise ShapeError(f"decoder must output 2*d_x = {2 * self.d_x} values, got {decoder.dims[-1]}")
        if mode == QUANTUM:
            if spec is None or qparams is None:
                raise ValidationError("Quantum mode needs an ansatz spec and parameters")
            if not spec.accepts_latent(self.latent_dim):
                raise ShapeError(f"{spec} cannot encode a {self.latent_dim}-dimensional latent")
            if decoder.dims[0] != spec.n_qubits:
                raise ShapeError(f"decoder input {decoder.dims[0]} != n_qubits {spec.n_qubits}")
            if quantum_input_grad and spec.encoding != FEATURE_MAP:
                raise ValidationError("quantum_input_grad requires FeatureMap encoding")
            self.spec = spec
            self.qparams = np.array(qparams, dtype=np.float64)
            self.qlayer = QuantumLayer(spec)
        else:
            if decoder.dims[0] != self.latent_dim:
                raise ShapeError(f"decoder input {decoder.dims[0]} != latent dimension {self.latent_dim}")
            self.spec = None
            self.qparams = None
            self.qlayer = None

    @classmethod
    def build(cls, d_x: int, latent_dim: int, src, mode: str = QUANTUM, hidden=(32, 32), depth: int = 3,
              encoding: str = FEATURE_MAP, noise_sigma: float = 0.1, quantum_input_grad: bool = True) -> "QegmModel":
        """Fresh model with Glorot networks and small random circuit angles."""
        hidden = list(hidden)
        encoder = Mlp.glorot([d_x] + hidden + [latent_dim], src.spawn("encoder"))
        spec = qparams = None
        dec_in = latent_dim
        if mode == QUANTUM:
            spec = AnsatzSpec.for_latent(latent_dim, depth, encoding)
            qparams = init_params(spec, src.spawn("quantum"))
            dec_in = spec.n_qubits
        decoder = Mlp.glorot([dec_in] + hidden + [2 * d_x], src.spawn("decoder"))
        return cls(encoder, decoder, mode, spec, qparams, noise_sigma, quantum_input_grad)

    @property
    def is_quantum(self) -> bool:
        return self.mode == QUANTUM

    def named_params(self) -> dict:
        params = {**self.encoder.named_params("encoder"), **self.decoder.named_params("decoder")}
        if self.is_quantum:
            params["quantum.theta"] = self.qparams
        return params

    def latent_map(self, z: np.ndarray, shots: Optional[int] = None, src=None) -> np.ndarray:
        if not self.is_quantum:
            return z
        if shots:
            return estimate_z_from_shots(z, self.qparams, self.spec, shots, src)
        return self.qlayer.forward(z, self.qparams)

    def copy(self) -> "QegmModel":
        return from_state_dict(to_state_dict(self))


@dataclass
class Internals:
    encoded: np.ndarray
    noise: np.ndarray
    latent: np.ndarray
    quantum_latent: np.ndarray
    output: np.ndarray


def forward(model: QegmModel, x, src=None, noise: Optional[np.ndarray] = None):
    """Returns (GaussianHead, Internals). Noise comes from ``noise`` if given,
    else from ``src``; with neither (or sigma 0) the latent is left unperturbed."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.d_x:
        raise ShapeError(f"model expects {model.d_x} features, got {x.shape[1]}")
    encoded = model.encoder.forward(x)
    if noise is None:
        if src is None or model.noise_sigma == 0:
            noise = np.zeros_like(encoded)
        else:
            noise = draw_noise_batch(src, len(x), model.latent_dim, model.noise_sigma)
    latent = encoded + noise
    zq = model.latent_map(latent)
    out = model.decoder.forward(zq)
    return GaussianHead.from_output(out, model.d_x), Internals(encoded, noise, latent, zq, out)


def gaussian_nll(x, head: GaussianHead) -> np.ndarray:
    """Per-scalar negative log-likelihood, shape (batch, d_x)."""
    return _HALF_LOG_2PI + 0.5 * head.log_variance + 0.5 * (x - head.mean) ** 2 * np.exp(-head.log_variance)


def hybrid_loss(x, head: GaussianHead, rare_mask, cfg: LossConfig) -> LossTerms:
    """rec = mean NLL over all scalars; tail = mean NLL over rare rows (0 if none)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    rare = np.asarray(rare_mask, dtype=bool)
    if len(x) == 0:
        raise ValidationError("loss needs a non-empty batch")
    nll = gaussian_nll(x, head)
    rec = float(nll.mean())
    tail = float(nll[rare].mean()) if rare.any() else 0.0
    return LossTerms(cfg.lambda_rec * rec + cfg.lambda_tail * tail, rec, tail)


def hybrid_loss_grad(x, head: GaussianHead, rare_mask, cfg: LossConfig) -> np.ndarray:
    """dL_hybrid / d(decoder output), shape (batch, 2 * d_x)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    rare = np.asarray(rare_mask, dtype=bool)
    batch, d_x = x.shape
    w = np.full(batch, cfg.lambda_rec / batch)
    if rare.any():
        w = w + rare * (cfg.lambda_tail / rare.sum())
    w = w[:, None] / d_x
    inv_var = np.exp(-head.log_variance)
    resid = head.mean - x
    g_mean = w * resid * inv_var
    g_lv = w * 0.5 * (1.0 - resid**2 * inv_var)
    g_lv[head.clamped] = 0.0
    return np.hstack([g_mean, g_lv])


def loss_and_grads(model: QegmModel, x, rare_mask, cfg: LossConfig, src=None, noise=None):
    """One forward/backward pass. Returns (LossTerms, {param name: gradient})."""
    head, internals = forward(model, x, src, noise)
    terms = hybrid_loss(x, head, rare_mask, cfg)
    g_out = hybrid_loss_grad(x, head, rare_mask, cfg)
    dec_grads, g_zq = model.decoder.backward(g_out)
    grads = Mlp.named_grads("decoder", dec_grads)
    if model.is_quantum:
        grads["quantum.theta"] = model.qlayer.param_grad(internals.latent, model.qparams, g_zq)
        if model.quantum_input_grad:
            g_latent = model.qlayer.input_vjp(internals.latent, model.qparams, g_zq)
        else:
            g_latent = np.zeros_like(internals.latent)
    else:
        g_latent = g_zq
    enc_grads, _ = model.encoder.backward(g_latent)
    grads.update(Mlp.named_grads("encoder", enc_grads))
    return terms, grads


def reconstruct(model: QegmModel, x) -> np.ndarray:
    """Decoder mean with noise disabled."""
    head, _ = forward(model, x)
    return head.mean


def predict(model: QegmModel, x) -> GaussianHead:
    head, _ = forward(model, x)
    return head


def generate(model: QegmModel, count: int, src, shots: Optional[int] = None, sample: bool = False) -> np.ndarray:
    """Draw latents from N(0, I), inject noise, run the latent map and decode.

    Returns decoder means, or draws from the Gaussian head when ``sample``.
    """
    if count < 0:
        raise ValidationError(f"count must be >= 0, got {count}")
    if count == 0:
        return np.zeros((0, model.d_x))
    if not all(np.all(np.isfinite(p)) for p in model.named_params().values()):
        raise ValidationError("model parameters are not finite; cannot generate")
    z = np.asarray(src.normal((count, model.latent_dim)))
    if model.noise_sigma > 0:
        z = z + draw_noise_batch(src, count, model.latent_dim, model.noise_sigma)
    zq = model.latent_map(z, shots, src)
    head = GaussianHead.from_output(model.decoder.forward(zq), model.d_x)
    if sample:
        return head.mean + head.std * np.asarray(src.normal((count, model.d_x)))
    return head.mean


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0 or self.patience < 1:
            raise ValidationError(f"invalid training config {self}")


@dataclass
class TrainReport:
    seed: int
    mode: str
    epochs: list = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False
    wall_clock_seconds: float = 0.0
    params_per_circuit: int = 0
    checkpoint: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_losses(model: QegmModel, x, rare_mask, cfg: LossConfig) -> LossTerms:
    head, _ = forward(model, x)
    return hybrid_loss(x, head, rare_mask, cfg)


def _restore(model: QegmModel, params: dict) -> None:
    for name, arr in model.named_params().items():
        arr[...] = params[name]


def train(model: QegmModel, dataset, loss_cfg: LossConfig, train_cfg: TrainConfig, noise_src=None,
          optimizer: Optional[Adam] = None) -> TrainReport:
    """Joint Adam training of the classical weights and circuit angles.

    Batches are reshuffled each epoch from a stream derived from
    ``train_cfg.seed``; latent noise comes from ``noise_src`` (defaults to a
    seed-derived PRNG). Validation losses are computed without noise. The
    parameters with the best validation loss are restored at the end.
    """
    start = time.perf_counter()
    root = SeededPrng(train_cfg.seed)
    shuffle_src = root.spawn("shuffle")
    noise_src = noise_src if noise_src is not None else root.spawn("noise")
    opt = optimizer or Adam(train_cfg.learning_rate)
    x_train, r_train = dataset.part("train")
    x_val, r_val = dataset.part("val")
    params = model.named_params()
    report = TrainReport(seed=train_cfg.seed, mode=model.mode,
                         params_per_circuit=model.spec.n_params if model.is_quantum else 0)
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    stale = 0
    n = len(x_train)
    for epoch in range(train_cfg.epochs):
        order = np.argsort(np.asarray(shuffle_src.uniform(n)), kind="stable")
        evals0 = model.qlayer.evaluations if model.is_quantum else 0
        in_evals0 = model.qlayer.input_evaluations if model.is_quantum else 0
        sums = np.zeros(3)
        n_batches = 0
        for b, lo in enumerate(range(0, n, train_cfg.batch_size)):
            idx = order[lo : lo + train_cfg.batch_size]
            terms, grads = loss_and_grads(model, x_train[idx], r_train[idx], loss_cfg, noise_src)
            if not np.isfinite(terms.hybrid) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericError(f"non-finite loss or gradient at epoch {epoch}, batch {b}", last_good=best_params)
            opt.step(params, grads)
            sums += (terms.hybrid, terms.rec, terms.tail)
            n_batches += 1
        evals = (model.qlayer.evaluations - evals0) if model.is_quantum else 0
        in_evals = (model.qlayer.input_evaluations - in_evals0) if model.is_quantum else 0
        val = evaluate_losses(model, x_val, r_val, loss_cfg)
        if not np.isfinite(val.hybrid):
            raise NumericError(f"non-finite validation loss at epoch {epoch}", last_good=best_params)
        mean = sums / n_batches
        record = {
            "epoch": epoch,
            "batches": n_batches,
            "train": {"hybrid": mean[0], "rec": mean[1], "tail": mean[2]},
            "val": {"hybrid": val.hybrid, "rec": val.rec, "tail": val.tail},
            "circuit_evaluations": evals,
            "input_shift_evaluations": in_evals,
        }
        report.epochs.append(record)
        if val.hybrid < best_val:
            best_val = val.hybrid
            best_params = {k: v.copy() for k, v in params.items()}
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.patience:
                report.stopped_early = True
                break
    if report.epochs:
        _restore(model, best_params)
    report.wall_clock_seconds = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# checkpoints


def _mlp_dict(net: Mlp) -> dict:
    return {"dims": net.dims, "weights": [w.tolist() for w in net.weights], "biases": [b.tolist() for b in net.biases]}


def _mlp_from(d: dict) -> Mlp:
    return Mlp(d["dims"], [np.array(w, dtype=np.float64).reshape(o, i) for w, i, o in
                           zip(d["weights"], d["dims"][:-1], d["dims"][1:])], d["biases"])


def to_state_dict(model: QegmModel, optimizer: Optional[Adam] = None, extra: Optional[dict] = None) -> dict:
    state = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mode": model.mode,
        "noise_sigma": model.noise_sigma,
        "quantum_input_grad": model.quantum_input_grad,
        "encoder": _mlp_dict(model.encoder),
        "decoder": _mlp_dict(model.decoder),
        "quantum": None,
        "adam": optimizer.state_dict() if optimizer is not None else None,
    }
    if model.is_quantum:
        state["quantum"] = {
            "n_qubits": model.spec.n_qubits,
            "depth": model.spec.depth,
            "encoding": model.spec.encoding,
            "theta": model.qparams.tolist(),
        }
    if extra:
        state.update(extra)
    return state


def from_state_dict(state: dict) -> QegmModel:
    if state.get("format") != CHECKPOINT_FORMAT or state.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    spec = qparams = None
    if state["quantum"] is not None:
        q = state["quantum"]
        spec = AnsatzSpec(q["n_qubits"], q["depth"], q["encoding"])
        qparams = np.array(q["theta"], dtype=np.float64)
    return QegmModel(_mlp_from(state["encoder"]), _mlp_from(state["decoder"]), state["mode"], spec, qparams,
                     state["noise_sigma"], state["quantum_input_grad"])
