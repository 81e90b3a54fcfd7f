"""Sequence-pair encoder, projection head, and cluster predictor.

The encoder embeds each frame with a shared 3-layer MLP, adds sinusoidal
positional encoding once, then applies an even number of residual
attention blocks alternating self-attention and cross-attention (self
first). Both sequences share every weight; in cross blocks the queries
come from one sequence and keys/values from the other. The projection
head is 4 per-frame linear layers with ReLU (and optional mask-aware
batch normalization) between them; the cluster predictor is a small
self-attention stack over the projected frames.

All forward passes build autodiff graphs; wrap calls in ``no_grad()`` for
inference. Attention uses additive -1e9 logits on masked keys, which
underflow to exactly zero weight after the softmax.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ConfigError
from .store import ParameterStore
from .tensor import (
    BatchNormState,
    Tensor,
    add,
    batch_norm,
    constant,
    layer_norm,
    matmul,
    no_grad,
    relu,
    reshape,
    scale,
    softmax_rows,
    transpose,
)

MASK_LOGIT = -1e9

ATTENTION_MODES = ("alternate", "self_only", "cross_only")


@dataclass
class ModelConfig:
    input_dim: int
    embed_dim: int = 128
    mlp_hidden: int = 512
    projection_dim: int | None = None
    encoder_layers: int = 4
    predictor_layers: int = 2
    attention_heads: int = 4
    ff_multiplier: int = 2
    use_batch_norm: bool = True
    attention_mode: str = "alternate"

    def __post_init__(self):
        if self.projection_dim is None:
            self.projection_dim = self.embed_dim

    def validate(self) -> None:
        for name in ("input_dim", "embed_dim", "mlp_hidden", "projection_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.encoder_layers < 0 or self.encoder_layers % 2 != 0:
            raise ConfigError("encoder_layers must be even (self/cross alternation pairs)")
        if self.predictor_layers < 1:
            raise ConfigError("predictor_layers must be >= 1")
        if self.attention_heads < 1 or self.ff_multiplier < 1:
            raise ConfigError("attention_heads and ff_multiplier must be >= 1")
        if self.embed_dim % 2 != 0:
            raise ConfigError("embed_dim must be even for sinusoidal positional encoding")
        if self.embed_dim % self.attention_heads != 0:
            raise ConfigError("embed_dim must be divisible by attention_heads")
        if self.projection_dim % self.attention_heads != 0:
            raise ConfigError("projection_dim must be divisible by attention_heads")
        if self.attention_mode not in ATTENTION_MODES:
            raise ConfigError(f"attention_mode must be one of {ATTENTION_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        cfg = cls(**raw)
        cfg.validate()
        return cfg


@dataclass
class EmbeddingSequence:
    """Per-frame outputs of one sequence: encoder space and loss space."""

    u: np.ndarray  # (T, embed_dim)
    z: np.ndarray | None  # (T, projection_dim)
    mask: np.ndarray  # (T,) bool

    def space(self, name: str) -> np.ndarray:
        if name == "u":
            return self.u
        if name == "z":
            if self.z is None:
                raise ValueError("projection space was not computed")
            return self.z
        raise ValueError(f"unknown embedding space {name!r}")


def positional_encoding(length: int, dim: int, dtype=np.float32) -> np.ndarray:
    """PE[t, 2i] = sin(t / 10000^(2i/dim)); PE[t, 2i+1] = cos of the same."""
    if dim % 2 != 0:
        raise ConfigError("positional encoding dimension must be even")
    positions = np.arange(length, dtype=np.float64)[:, None]
    pair = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, 2.0 * pair / dim)
    pe = np.empty((length, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe.astype(dtype)


def _kaiming_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Model:
    """Binds a ModelConfig to parameters living in a ParameterStore."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.store = store
        self._bn_states: dict[str, BatchNormState] = {}
        self._build(rng)

    @classmethod
    def build(cls, cfg: ModelConfig, seed: int = 0) -> "Model":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
        return cls(cfg, ParameterStore(), rng)

    def rebind(self, store: ParameterStore) -> "Model":
        """Same architecture over a different store (e.g. a float64 copy)."""
        clone = Model.__new__(Model)
        clone.cfg = self.cfg
        clone.store = store
        clone._bn_states = {}
        clone._build(np.random.default_rng(0))
        return clone

    # -- parameter construction -------------------------------------------

    def _linear_params(self, rng, name: str, d_in: int, d_out: int):
        self.store.parameter(f"{name}/W", _kaiming_uniform(rng, d_in, (d_in, d_out)))
        self.store.parameter(f"{name}/b", np.zeros(d_out, dtype=np.float32))

    def _norm_params(self, name: str, dim: int):
        self.store.parameter(f"{name}/g", np.ones(dim, dtype=np.float32))
        self.store.parameter(f"{name}/b", np.zeros(dim, dtype=np.float32))

    def _block_params(self, rng, name: str, dim: int):
        self._norm_params(f"{name}/ln_attn", dim)
        for proj in ("wq", "wk", "wv", "wo"):
            self._linear_params(rng, f"{name}/attn/{proj}", dim, dim)
        self._norm_params(f"{name}/ln_ff", dim)
        self._linear_params(rng, f"{name}/ff/0", dim, dim * self.cfg.ff_multiplier)
        self._linear_params(rng, f"{name}/ff/1", dim * self.cfg.ff_multiplier, dim)

    def _bn_params(self, name: str, dim: int):
        self._norm_params(name, dim)
        state = BatchNormState(dim)
        state.running_mean = self.store.buffer(f"{name}/running_mean", state.running_mean)
        state.running_var = self.store.buffer(f"{name}/running_var", state.running_var)
        self._bn_states[name] = state

    def _build(self, rng):
        cfg = self.cfg
        self._linear_params(rng, "mlp/0", cfg.input_dim, cfg.mlp_hidden)
        self._linear_params(rng, "mlp/1", cfg.mlp_hidden, cfg.mlp_hidden)
        self._linear_params(rng, "mlp/2", cfg.mlp_hidden, cfg.embed_dim)
        for i in range(cfg.encoder_layers):
            self._block_params(rng, f"enc/{i}", cfg.embed_dim)
        self._norm_params("enc/final_ln", cfg.embed_dim)

        p = cfg.projection_dim
        self._linear_params(rng, "proj/0", cfg.embed_dim, p)
        self._linear_params(rng, "proj/1", p, p)
        self._linear_params(rng, "proj/2", p, p)
        self._linear_params(rng, "proj/3", p, p)
        if cfg.use_batch_norm:
            for k in range(3):
                self._bn_params(f"proj/bn{k}", p)

        for i in range(cfg.predictor_layers):
            self._block_params(rng, f"pred/{i}", p)
        self._norm_params("pred/final_ln", p)

    # -- forward pieces ----------------------------------------------------

    def _p(self, name: str) -> Tensor:
        return self.store.params[name]

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return add(matmul(x, self._p(f"{name}/W")), self._p(f"{name}/b"))

    def _ln(self, x: Tensor, name: str) -> Tensor:
        return layer_norm(x, self._p(f"{name}/g"), self._p(f"{name}/b"))

    def frame_mlp(self, features: np.ndarray) -> Tensor:
        """Per-frame embedding of a (T, D) feature matrix (no PE)."""
        x = constant(np.asarray(features), name="frames")
        if x.data.ndim != 2 or x.data.shape[1] != self.cfg.input_dim:
            raise ValueError(
                f"expected (T, {self.cfg.input_dim}) features, got {x.data.shape}"
            )
        x = relu(self._linear(x, "mlp/0"))
        x = relu(self._linear(x, "mlp/1"))
        return self._linear(x, "mlp/2")

    def _attention(
        self,
        q_in: Tensor,
        kv_in: Tensor,
        name: str,
        key_mask: np.ndarray | None,
        attn_sink: dict | None,
    ) -> Tensor:
        heads = self.cfg.attention_heads
        dim = q_in.data.shape[-1]
        dh = dim // heads
        t_q = q_in.data.shape[0]
        t_k = kv_in.data.shape[0]

        q = self._linear(q_in, f"{name}/wq")
        k = self._linear(kv_in, f"{name}/wk")
        v = self._linear(kv_in, f"{name}/wv")
        qh = transpose(reshape(q, (t_q, heads, dh)), (1, 0, 2))
        kh = transpose(reshape(k, (t_k, heads, dh)), (1, 2, 0))
        vh = transpose(reshape(v, (t_k, heads, dh)), (1, 0, 2))

        logits = scale(matmul(qh, kh), 1.0 / np.sqrt(dh))
        if key_mask is not None and not key_mask.all():
            bias = np.where(key_mask, 0.0, MASK_LOGIT).astype(q_in.data.dtype)
            logits = add(logits, constant(bias[None, None, :]))
        weights = softmax_rows(logits)
        if attn_sink is not None:
            attn_sink[name] = weights.data.copy()

        out = matmul(weights, vh)
        out = reshape(transpose(out, (1, 0, 2)), (t_q, dim))
        return self._linear(out, f"{name}/wo")

    def _block(
        self,
        x_q: Tensor,
        x_kv: Tensor,
        name: str,
        key_mask: np.ndarray | None,
        attn_sink: dict | None,
    ) -> Tensor:
        nq = self._ln(x_q, f"{name}/ln_attn")
        nkv = nq if x_kv is x_q else self._ln(x_kv, f"{name}/ln_attn")
        x = add(x_q, self._attention(nq, nkv, f"{name}/attn", key_mask, attn_sink))
        h = self._ln(x, f"{name}/ln_ff")
        h = self._linear(relu(self._linear(h, f"{name}/ff/0")), f"{name}/ff/1")
        return add(x, h)

    def _layer_kind(self, index: int) -> str:
        if self.cfg.attention_mode == "self_only":
            return "self"
        if self.cfg.attention_mode == "cross_only":
            return "cross"
        return "self" if index % 2 == 0 else "cross"

    def encode_pair(
        self,
        feats_a: np.ndarray,
        feats_b: np.ndarray,
        mask_a: np.ndarray | None = None,
        mask_b: np.ndarray | None = None,
        attn_sink: dict | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Joint encoding of two sequences; returns (U_a, U_b)."""
        for label, mask, feats in (("a", mask_a, feats_a), ("b", mask_b, feats_b)):
            if mask is not None and not np.any(mask):
                raise ValueError(f"view {label} has an all-false mask")
            if mask is not None and mask.shape[0] != np.asarray(feats).shape[0]:
                raise ValueError(f"view {label}: mask length does not match frames")

        pe_a = positional_encoding(np.asarray(feats_a).shape[0], self.cfg.embed_dim)
        pe_b = positional_encoding(np.asarray(feats_b).shape[0], self.cfg.embed_dim)
        x_a = add(self.frame_mlp(feats_a), constant(pe_a))
        x_b = add(self.frame_mlp(feats_b), constant(pe_b))

        for i in range(self.cfg.encoder_layers):
            name = f"enc/{i}"
            if self._layer_kind(i) == "self":
                x_a = self._block(x_a, x_a, name, mask_a, _sub_sink(attn_sink, "a"))
                x_b = self._block(x_b, x_b, name, mask_b, _sub_sink(attn_sink, "b"))
            else:
                new_a = self._block(x_a, x_b, name, mask_b, _sub_sink(attn_sink, "a"))
                new_b = self._block(x_b, x_a, name, mask_a, _sub_sink(attn_sink, "b"))
                x_a, x_b = new_a, new_b

        u_a = self._ln(x_a, "enc/final_ln")
        u_b = self._ln(x_b, "enc/final_ln")
        return u_a, u_b

    def project(
        self, u: Tensor, mask: np.ndarray | None = None, training: bool = False
    ) -> Tensor:
        """4-layer per-frame projection head U -> Z."""
        x = self._linear(u, "proj/0")
        for k in range(3):
            if self.cfg.use_batch_norm:
                x = batch_norm(
                    x,
                    self._p(f"proj/bn{k}/g"),
                    self._p(f"proj/bn{k}/b"),
                    self._bn_states[f"proj/bn{k}"],
                    training=training,
                    mask=mask,
                )
            x = relu(x)
            x = self._linear(x, f"proj/{k + 1}")
        return x

    def cluster_predict(
        self, z: Tensor, mask: np.ndarray | None = None, attn_sink: dict | None = None
    ) -> Tensor:
        """Self-attention predictor over projected frames, H(Z)."""
        x = z
        for i in range(self.cfg.predictor_layers):
            x = self._block(x, x, f"pred/{i}", mask, attn_sink)
        return self._ln(x, "pred/final_ln")

    # -- inference ----------------------------------------------------------

    def embed_sequence(self, features: np.ndarray, space: str = "u") -> EmbeddingSequence:
        """Deterministic single-sequence embedding (no augmentation).

        Cross-attention needs a partner sequence, so a lone sequence is
        paired with itself, which turns every cross block into plain
        self-attention.
        """
        with no_grad():
            u_a, _ = self.encode_pair(features, features)
            z = self.project(u_a, training=False) if space == "z" else None
        t = np.asarray(features).shape[0]
        return EmbeddingSequence(
            u=u_a.data.copy(),
            z=None if z is None else z.data.copy(),
            mask=np.ones(t, dtype=bool),
        )

    def embed_joint(
        self, feats_a: np.ndarray, feats_b: np.ndarray, space: str = "u"
    ) -> tuple[np.ndarray, np.ndarray]:
        """Encode two sequences together and return the requested space."""
        with no_grad():
            u_a, u_b = self.encode_pair(feats_a, feats_b)
            if space == "z":
                return (
                    self.project(u_a, training=False).data.copy(),
                    self.project(u_b, training=False).data.copy(),
                )
            return u_a.data.copy(), u_b.data.copy()


def _sub_sink(attn_sink: dict | None, stream: str) -> dict | None:
    if attn_sink is None:
        return None
    return attn_sink.setdefault(stream, {})


def with_attention_mode(cfg: ModelConfig, mode: str) -> ModelConfig:
    return replace(cfg, attention_mode=mode)
