"""Neural building blocks on top of the tape engine.

Layers are thin views over a flat name→Tensor parameter dict owned by
``DecoderWeights``; the flat dict is what the optimizer and checkpoint
code see, so freezing or serializing a subtree is a name-prefix filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

LN10 = math.log(10.0)


def exp_sigmoid(x: Tensor) -> Tensor:
    """Positive, saturating output nonlinearity: 2·sigmoid(x)^ln(10) + 1e-7."""
    return ad.add(ad.mul(ad.power(ad.sigmoid(x), LN10), 2.0), 1e-7)


class Linear:
    def __init__(self, w: Tensor, b: Tensor):
        self.w = w
        self.b = b

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


class LayerNorm:
    """Normalization over the last axis with learned gain/bias."""

    def __init__(self, g: Tensor, b: Tensor, eps: float = 1e-5):
        self.g = g
        self.b = b
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = ad.tmean(x, axis=-1, keepdims=True)
        d = ad.sub(x, mu)
        var = ad.tmean(ad.mul(d, d), axis=-1, keepdims=True)
        normed = ad.div(d, ad.sqrt(ad.add(var, self.eps)))
        return ad.add(ad.mul(normed, self.g), self.b)


class MLP:
    """Stack of [Linear → LayerNorm → ReLU] blocks (DDSP-style)."""

    def __init__(self, blocks: list[tuple[Linear, LayerNorm]]):
        self.blocks = blocks

    def __call__(self, x: Tensor) -> Tensor:
        for lin, ln in self.blocks:
            x = ad.relu(ln(lin(x)))
        return x


class GRU:
    """Unidirectional gated recurrent unit, full backprop through time.

    Gate equations follow the reset-applied-to-projected-state convention:
        r = σ(x·Wr + br + h·Ur + cr)
        z = σ(x·Wz + bz + h·Uz + cz)
        n = tanh(x·Wn + bn + r ⊙ (h·Un + cn))
        h' = (1 − z) ⊙ n + z ⊙ h
    """

    def __init__(self, w_ih: Tensor, w_hh: Tensor, b_ih: Tensor, b_hh: Tensor):
        self.w_ih = w_ih
        self.w_hh = w_hh
        self.b_ih = b_ih
        self.b_hh = b_hh
        self.hidden = w_hh.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        """Map a (N, in) sequence to the (N, hidden) state sequence from h₀=0."""
        n_steps = x.shape[0]
        hid = self.hidden
        # input projections for every step at once; the loop only recurs on h
        xp = ad.add(ad.matmul(x, self.w_ih), self.b_ih)
        h = ad.constant(np.zeros((1, hid)))
        states = []
        for t in range(n_steps):
            xp_t = xp[t : t + 1]
            hp = ad.add(ad.matmul(h, self.w_hh), self.b_hh)
            r = ad.sigmoid(ad.add(xp_t[:, :hid], hp[:, :hid]))
            z = ad.sigmoid(ad.add(xp_t[:, hid : 2 * hid], hp[:, hid : 2 * hid]))
            n = ad.tanh(ad.add(xp_t[:, 2 * hid :], ad.mul(r, hp[:, 2 * hid :])))
            h = ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, h))
            states.append(h)
        return ad.concat(states, axis=0)


class Conditioner:
    """Similarity-conditioning stack: smoothing layer + FiLM generator.

    The generator's final layer starts at zero, so γ=1, β=0 at init and
    conditioning begins as the identity map.
    """

    def __init__(self, smooth_lin: Linear, smooth_ln: LayerNorm, film_lin: Linear, hidden: int):
        self.smooth_lin = smooth_lin
        self.smooth_ln = smooth_ln
        self.film_lin = film_lin
        self.hidden = hidden

    def gamma_beta(self, similarity: Tensor) -> tuple[Tensor, Tensor]:
        if similarity.ndim == 1:
            similarity = ad.reshape(similarity, (1, similarity.shape[0]))
        smoothed = ad.relu(self.smooth_ln(self.smooth_lin(similarity)))
        gb = self.film_lin(smoothed)
        gamma = ad.add(gb[:, : self.hidden], 1.0)
        beta = gb[:, self.hidden :]
        return gamma, beta


def film(hidden: Tensor, similarity: Tensor, conditioner: Conditioner) -> Tensor:
    """Feature-wise linear modulation: out[t,h] = γ[h]·hidden[t,h] + β[h]."""
    if hidden.shape[-1] != conditioner.hidden:
        raise ShapeError(
            f"film width mismatch: hidden has {hidden.shape[-1]} units, "
            f"conditioner expects {conditioner.hidden}"
        )
    expected = conditioner.smooth_lin.w.shape[0]
    sim_len = similarity.shape[-1]
    if sim_len != expected:
        raise ShapeError(f"similarity vector has {sim_len} channels, conditioner expects {expected}")
    gamma, beta = conditioner.gamma_beta(similarity)
    return ad.add(ad.mul(hidden, gamma), beta)


@dataclass
class DecoderArch:
    """Shape configuration of the decoder; width defaults follow the full-scale setup."""

    n_features: int = 2  # spectral centroid + loudness tracks
    n_channels: int = 9  # similarity-vector length (one score per reference class)
    hidden: int = 512
    mlp_layers: int = 3
    smooth_width: int = 64
    n_bands: int = 100
    n_sines: int = 128
    ir_length: int = 22050

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderArch":
        return cls(**{k: int(v) for k, v in d.items()})


@dataclass
class DecoderWeights:
    """All trainable tensors, keyed by dotted path names.

    Names under ``cond.`` form the similarity-conditioning stack (the only
    part fine-tuning may touch); ``reverb.ir_tail`` is the learned impulse
    response minus its fixed unit first tap.
    """

    arch: DecoderArch
    params: dict[str, Tensor] = field(default_factory=dict)

    def _lin(self, name: str) -> Linear:
        return Linear(self.params[f"{name}.w"], self.params[f"{name}.b"])

    def _ln(self, name: str) -> LayerNorm:
        return LayerNorm(self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _mlp(self, prefix: str) -> MLP:
        return MLP(
            [
                (self._lin(f"{prefix}.l{i}"), self._ln(f"{prefix}.ln{i}"))
                for i in range(self.arch.mlp_layers)
            ]
        )

    def feature_mlp(self, i: int) -> MLP:
        return self._mlp(f"feat{i}")

    def gru(self) -> GRU:
        p = self.params
        return GRU(p["gru.w_ih"], p["gru.w_hh"], p["gru.b_ih"], p["gru.b_hh"])

    def post_mlp(self) -> MLP:
        return self._mlp("post")

    def head(self, name: str) -> Linear:
        return self._lin(f"head_{name}")

    def conditioner(self) -> Conditioner:
        return Conditioner(
            self._lin("cond.smooth"), self._ln("cond.smooth.ln"), self._lin("cond.film"), self.arch.hidden
        )

    def reverb_ir(self) -> Tensor:
        """Full impulse response: fixed unit first tap + trainable tail."""
        return ad.concat([ad.constant(np.ones(1)), self.params["reverb.ir_tail"]], axis=0)

    def values_snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.params.items()}

    def load_values(self, tensors: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            if name not in tensors:
                raise ShapeError(f"missing weight tensor {name!r}")
            if tensors[name].shape != t.values.shape:
                raise ShapeError(
                    f"weight {name!r} has shape {tensors[name].shape}, expected {t.values.shape}"
                )
            t.values = np.asarray(tensors[name], dtype=np.float64).copy()


def init_decoder_weights(arch: DecoderArch, seed: int) -> DecoderWeights:
    """Uniform fan-in initialization; conditioning starts as identity."""
    rng = np.random.default_rng(seed)
    w = DecoderWeights(arch=arch)

    def param(name: str, values: np.ndarray) -> Tensor:
        t = Tensor(values, requires_grad=True)
        w.params[name] = t
        return t

    def lin(name: str, fan_in: int, fan_out: int, zero: bool = False):
        if zero:
            param(f"{name}.w", np.zeros((fan_in, fan_out)))
            param(f"{name}.b", np.zeros(fan_out))
        else:
            bound = 1.0 / math.sqrt(fan_in)
            param(f"{name}.w", rng.uniform(-bound, bound, (fan_in, fan_out)))
            param(f"{name}.b", rng.uniform(-bound, bound, fan_out))

    def ln(name: str, width: int):
        param(f"{name}.g", np.ones(width))
        param(f"{name}.b", np.zeros(width))

    def mlp(prefix: str, in_width: int):
        width = arch.hidden
        for i in range(arch.mlp_layers):
            lin(f"{prefix}.l{i}", in_width if i == 0 else width, width)
            ln(f"{prefix}.ln{i}", width)

    for i in range(arch.n_features):
        mlp(f"feat{i}", 1)

    gru_in = arch.n_features * arch.hidden
    bound_in = 1.0 / math.sqrt(gru_in)
    bound_h = 1.0 / math.sqrt(arch.hidden)
    param("gru.w_ih", rng.uniform(-bound_in, bound_in, (gru_in, 3 * arch.hidden)))
    param("gru.w_hh", rng.uniform(-bound_h, bound_h, (arch.hidden, 3 * arch.hidden)))
    param("gru.b_ih", rng.uniform(-bound_h, bound_h, 3 * arch.hidden))
    param("gru.b_hh", rng.uniform(-bound_h, bound_h, 3 * arch.hidden))

    lin("cond.smooth", arch.n_channels, arch.smooth_width)
    ln("cond.smooth.ln", arch.smooth_width)
    lin("cond.film", arch.smooth_width, 2 * arch.hidden, zero=True)

    mlp("post", arch.hidden)
    lin("head_h", arch.hidden, arch.n_bands)
    lin("head_a", arch.hidden, arch.n_sines)
    lin("head_f", arch.hidden, arch.n_sines)

    # impulse-response tail: quiet noise under an exponential decay envelope
    decay = np.exp(-np.linspace(0.0, 6.0, arch.ir_length - 1))
    param("reverb.ir_tail", 0.01 * rng.standard_normal(arch.ir_length - 1) * decay)
    return w


@dataclass
class AdamState:
    """First/second-moment buffers plus the shared step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def init_like(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(t.values) for k, t in params.items()},
            v={k: np.zeros_like(t.values) for k, t in params.items()},
        )


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[dict[str, Tensor], AdamState]:
    """Bias-corrected update, in place. Only names present in ``grads`` move;
    the learning-rate schedule is the caller's job."""
    b1, b2 = betas
    state.step += 1
    t = state.step
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.values.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, expected {p.values.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state
