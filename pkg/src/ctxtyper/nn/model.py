"""Parameters, forward pass, analytic backward pass, gradient checker.

Everything is float64. One sample is one id sequence; batching is a sum of
per-sample losses and gradients. The classifier reads the concatenation of
the final GRU state and an attention pool over all states, where attention
scores each state against the final state (scaled by 1/sqrt(hidden)) plus a
learned per-state content bias that starts at zero.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import NumericError
from .kernels import gru_backward_core, gru_forward_core

LOSS_CLAMP = 1e-12


@dataclass
class GruParams:
    w_z: np.ndarray  # (H, E) input weights, update gate
    w_r: np.ndarray  # (H, E) input weights, reset gate
    w_h: np.ndarray  # (H, E) input weights, candidate
    u_z: np.ndarray  # (H, H) recurrent weights, update gate
    u_r: np.ndarray  # (H, H) recurrent weights, reset gate
    u_h: np.ndarray  # (H, H) recurrent weights, candidate
    b_z: np.ndarray  # (H,)
    b_r: np.ndarray  # (H,) its own bias, distinct from b_z
    b_h: np.ndarray  # (H,)


@dataclass
class ModelParams:
    embedding: np.ndarray  # (vocab, E)
    gru: GruParams
    attn_score: np.ndarray  # (H,) additive content bias on attention scores
    dense_w: np.ndarray  # (classes, 2H)
    dense_b: np.ndarray  # (classes,)

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.gru.b_z.shape[0]

    @property
    def n_classes(self) -> int:
        return self.dense_b.shape[0]

    @property
    def attn_scale(self) -> float:
        return 1.0 / np.sqrt(self.hidden_dim)

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays in the fixed serialization order."""
        g = self.gru
        return [
            ("embedding", self.embedding),
            ("w_z", g.w_z),
            ("w_r", g.w_r),
            ("w_h", g.w_h),
            ("u_z", g.u_z),
            ("u_r", g.u_r),
            ("u_h", g.u_h),
            ("b_z", g.b_z),
            ("b_r", g.b_r),
            ("b_h", g.b_h),
            ("attn_score", self.attn_score),
            ("dense_w", self.dense_w),
            ("dense_b", self.dense_b),
        ]

    def copy(self) -> "ModelParams":
        g = self.gru
        return ModelParams(
            embedding=self.embedding.copy(),
            gru=GruParams(
                g.w_z.copy(), g.w_r.copy(), g.w_h.copy(),
                g.u_z.copy(), g.u_r.copy(), g.u_h.copy(),
                g.b_z.copy(), g.b_r.copy(), g.b_h.copy(),
            ),
            attn_score=self.attn_score.copy(),
            dense_w=self.dense_w.copy(),
            dense_b=self.dense_b.copy(),
        )

    def zeros_like(self) -> "ModelParams":
        out = self.copy()
        for _, arr in out.blocks():
            arr[...] = 0.0
        return out


def init_params(
    vocab_size: int, embed_dim: int, hidden_dim: int, n_classes: int, seed=0
) -> ModelParams:
    """Uniform init: embeddings in [-0.05, 0.05], weights scaled by fan-in."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    win = 1.0 / np.sqrt(embed_dim)
    wrec = 1.0 / np.sqrt(hidden_dim)
    wout = 1.0 / np.sqrt(2 * hidden_dim)
    return ModelParams(
        embedding=rng.uniform(-0.05, 0.05, (vocab_size, embed_dim)),
        gru=GruParams(
            w_z=rng.uniform(-win, win, (hidden_dim, embed_dim)),
            w_r=rng.uniform(-win, win, (hidden_dim, embed_dim)),
            w_h=rng.uniform(-win, win, (hidden_dim, embed_dim)),
            u_z=rng.uniform(-wrec, wrec, (hidden_dim, hidden_dim)),
            u_r=rng.uniform(-wrec, wrec, (hidden_dim, hidden_dim)),
            u_h=rng.uniform(-wrec, wrec, (hidden_dim, hidden_dim)),
            b_z=np.zeros(hidden_dim),
            b_r=np.zeros(hidden_dim),
            b_h=np.zeros(hidden_dim),
        ),
        attn_score=np.zeros(hidden_dim),
        dense_w=rng.uniform(-wout, wout, (n_classes, 2 * hidden_dim)),
        dense_b=np.zeros(n_classes),
    )


def _as_id_array(ids) -> np.ndarray:
    arr = ids.ids if hasattr(ids, "ids") else np.asarray(ids, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"input must be a non-empty 1-d id sequence, got shape {arr.shape}")
    return arr


def _resolve_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass
class SampleCache:
    """Everything the backward pass reuses from one forward run."""

    ids: np.ndarray
    inputs: np.ndarray  # (T, E) embedded input rows
    states_raw: np.ndarray  # (T, H) pre-dropout states
    update: np.ndarray
    reset: np.ndarray
    candidate: np.ndarray
    prev_states: np.ndarray
    keep: np.ndarray | None  # inverted-dropout mask, None at inference
    states: np.ndarray  # (T, H) post-dropout states seen downstream
    weights: np.ndarray  # (T,) attention weights
    context: np.ndarray  # (H,)
    features: np.ndarray  # (2H,)
    logits: np.ndarray  # (C,)
    probs: np.ndarray  # (C,)


def _run_gru(params: ModelParams, ids: np.ndarray, dropout_rate: float, training: bool, rng):
    g = params.gru
    inputs = params.embedding[ids]
    xz = inputs @ g.w_z.T
    xr = inputs @ g.w_r.T
    xh = inputs @ g.w_h.T
    states_raw, update, reset, candidate, prev_states = gru_forward_core(
        xz, xr, xh, g.u_z, g.u_r, g.u_h, g.b_z, g.b_r, g.b_h
    )
    keep = None
    states = states_raw
    if training and dropout_rate > 0.0:
        gen = _resolve_rng(rng)
        keep = (gen.random(states_raw.shape) >= dropout_rate) / (1.0 - dropout_rate)
        states = states_raw * keep
    return inputs, states_raw, update, reset, candidate, prev_states, keep, states


def gru_forward(ids, params: ModelParams, dropout_rate: float = 0.0, training: bool = False, rng=None):
    """State sequence and final state for one id sequence (h_0 = 0)."""
    arr = _as_id_array(ids)
    *_, states = _run_gru(params, arr, dropout_rate, training, rng)
    return states, states[-1]


def attention_pool(states: np.ndarray, h_final: np.ndarray, params: ModelParams):
    """Scaled dot-product pool of states against the final state.

    Returns (context, weights); weights sum to one.
    """
    scores = states @ (params.attn_scale * h_final + params.attn_score)
    weights, _ = softmax_probs(scores)
    return states.T @ weights, weights


def classify(h_final: np.ndarray, context: np.ndarray, params: ModelParams) -> np.ndarray:
    """Logits from the concatenated (final state, context) features."""
    features = np.concatenate([h_final, context])
    return params.dense_w @ features + params.dense_b


def softmax_probs(logits: np.ndarray) -> tuple[np.ndarray, int]:
    """Max-subtracted softmax plus the argmax index."""
    shifted = logits - np.max(logits)
    exps = np.exp(shifted)
    probs = exps / np.sum(exps)
    return probs, int(np.argmax(logits))


def nll_loss(probs: np.ndarray, label: int) -> float:
    """Negative log likelihood with a clamp against log(0)."""
    if not 0 <= label < probs.shape[0]:
        raise ValueError(f"label {label} outside {probs.shape[0]} classes")
    p = probs[label]
    if p < LOSS_CLAMP:
        warnings.warn(f"probability {p:.3e} clamped to {LOSS_CLAMP:.0e} in loss")
        p = LOSS_CLAMP
    return float(-np.log(p))


def forward_sample(
    params: ModelParams,
    ids,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng=None,
) -> SampleCache:
    arr = _as_id_array(ids)
    inputs, states_raw, update, reset, candidate, prev_states, keep, states = _run_gru(
        params, arr, dropout_rate, training, rng
    )
    h_final = states[-1]
    context, weights = attention_pool(states, h_final, params)
    features = np.concatenate([h_final, context])
    logits = params.dense_w @ features + params.dense_b
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits in forward pass")
    probs, _ = softmax_probs(logits)
    return SampleCache(
        ids=arr,
        inputs=inputs,
        states_raw=states_raw,
        update=update,
        reset=reset,
        candidate=candidate,
        prev_states=prev_states,
        keep=keep,
        states=states,
        weights=weights,
        context=context,
        features=features,
        logits=logits,
        probs=probs,
    )


def _accumulate_sample(params: ModelParams, cache: SampleCache, label: int, grads: ModelParams):
    g = params.gru
    gg = grads.gru
    hidden = params.hidden_dim
    states = cache.states
    weights = cache.weights

    d_logits = cache.probs.copy()
    d_logits[label] -= 1.0
    grads.dense_w += np.outer(d_logits, cache.features)
    grads.dense_b += d_logits

    d_features = params.dense_w.T @ d_logits
    d_final = d_features[:hidden].copy()
    d_context = d_features[hidden:]

    # Attention: value path, then softmax jacobian on the scores.
    d_weights = states @ d_context
    d_scores = weights * (d_weights - weights @ d_weights)
    score_vec = params.attn_scale * states[-1] + params.attn_score
    d_states = np.outer(weights, d_context) + np.outer(d_scores, score_vec)
    pooled = states.T @ d_scores
    grads.attn_score += pooled
    d_final += params.attn_scale * pooled  # query side of every score

    d_states[-1] += d_final
    if cache.keep is not None:
        d_states = d_states * cache.keep

    grad_az, grad_ar, grad_ah = gru_backward_core(
        d_states,
        cache.update,
        cache.reset,
        cache.candidate,
        cache.prev_states,
        np.ascontiguousarray(g.u_z.T),
        np.ascontiguousarray(g.u_r.T),
        np.ascontiguousarray(g.u_h.T),
    )

    gg.w_z += grad_az.T @ cache.inputs
    gg.w_r += grad_ar.T @ cache.inputs
    gg.w_h += grad_ah.T @ cache.inputs
    gg.u_z += grad_az.T @ cache.prev_states
    gg.u_r += grad_ar.T @ cache.prev_states
    gg.u_h += grad_ah.T @ (cache.reset * cache.prev_states)
    gg.b_z += grad_az.sum(axis=0)
    gg.b_r += grad_ar.sum(axis=0)
    gg.b_h += grad_ah.sum(axis=0)

    d_inputs = grad_az @ g.w_z + grad_ar @ g.w_r + grad_ah @ g.w_h
    np.add.at(grads.embedding, cache.ids, d_inputs)


def backward(
    batch: Sequence[tuple],
    params: ModelParams,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng=None,
) -> tuple[ModelParams, float, int]:
    """Sum-loss gradients over a batch of (ids, label) pairs.

    Returns (gradients, summed loss, correct top-1 count). Gradients are
    exact derivatives of the summed negative log likelihood.
    """
    if not batch:
        raise ValueError("empty batch")
    gen = _resolve_rng(rng) if training and dropout_rate > 0.0 else rng
    grads = params.zeros_like()
    loss_sum = 0.0
    correct = 0
    for ids, label in batch:
        cache = forward_sample(params, ids, dropout_rate, training, gen)
        loss_sum += nll_loss(cache.probs, label)
        if int(np.argmax(cache.probs)) == label:
            correct += 1
        _accumulate_sample(params, cache, label, grads)
    for name, arr in grads.blocks():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite gradient in block {name!r}")
    return grads, loss_sum, correct


# ---------------------------------------------------------------------------
# Finite-difference gradient check
# ---------------------------------------------------------------------------

@dataclass
class GradCheckConfig:
    vocab_size: int = 20
    embed_dim: int = 8
    hidden_dim: int = 8
    n_classes: int = 3
    seq_len: int = 12


def _random_check_params(cfg: GradCheckConfig, rng: np.random.Generator) -> ModelParams:
    # O(1) weights keep every gradient path well above float noise, which a
    # finite-difference comparison at training-init scale cannot resolve.
    params = init_params(cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.n_classes, rng)
    for _, arr in params.blocks():
        arr[...] = rng.uniform(-0.8, 0.8, arr.shape)
    return params


def grad_check(config: GradCheckConfig = None, seed: int = 0, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Sweeps every parameter entry of a random model on one random sequence.
    The relative error uses max(|analytic|, |numeric|, 1e-8) in the
    denominator.
    """
    cfg = config or GradCheckConfig()
    rng = np.random.default_rng(seed)
    params = _random_check_params(cfg, rng)
    ids = rng.integers(0, cfg.vocab_size, cfg.seq_len).astype(np.int64)
    label = int(rng.integers(0, cfg.n_classes))
    batch = [(ids, label)]

    grads, _, _ = backward(batch, params)

    def loss_at() -> float:
        total = 0.0
        for sample_ids, sample_label in batch:
            cache = forward_sample(params, sample_ids)
            total += nll_loss(cache.probs, sample_label)
        return total

    worst = 0.0
    analytic_blocks = dict(grads.blocks())
    for name, arr in params.blocks():
        analytic = analytic_blocks[name]
        flat = arr.reshape(-1)
        flat_grad = analytic.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = loss_at()
            flat[i] = original - eps
            minus = loss_at()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            denom = max(abs(flat_grad[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(flat_grad[i] - numeric) / denom)
    return worst
