"""Recurrent and attention building blocks of the encoder-decoder.

Every function here is batched by rows: an argument documented as a vector
of width d is a ``[B, d]`` matrix whose rows are independent sequences, and
a single sentence is simply the ``B = 1`` case.  Encoder output for one
sentence of J subwords (including the sentence-final marker) is a
``[J, 2 * enc_hidden]`` matrix of per-position annotations; batched sources
keep the same rows position-major, grouped as ``row = position * B + b``.

Parameter sets are flat dicts of named tensors so that model serialization
and the sharing registry can treat them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

INIT_SCALE = 0.1
NEG_INF = -1e9


@dataclass
class LayerDims:
    """Layer widths; defaults are the reference configuration."""

    embed: int = 256
    enc_hidden: int = 256  # per direction
    attn_hidden: int = 512
    dec_hidden: int = 512

    @property
    def annotation(self) -> int:
        return 2 * self.enc_hidden

    def validate(self) -> None:
        for name in ("embed", "enc_hidden", "attn_hidden", "dec_hidden"):
            if getattr(self, name) < 1:
                raise ShapeError(f"dims.{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "embed": self.embed,
            "enc_hidden": self.enc_hidden,
            "attn_hidden": self.attn_hidden,
            "dec_hidden": self.dec_hidden,
        }


def _const(arr, like: Tensor) -> Tensor:
    return Tensor(arr, dtype=like.dtype)


def uniform_param(rng: np.random.Generator, shape) -> Tensor:
    data = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
    return Tensor(data, requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def lstm_param_set(rng, d_in: int, d_h: int, prefix: str) -> dict:
    """Fused LSTM weights; gate order along the last axis: i, f, o, g.

    The forget-gate bias starts at +1 so memory persists early in training.
    """
    b = zeros_param((1, 4 * d_h))
    b.data[0, d_h:2 * d_h] = 1.0
    return {
        f"{prefix}.Wx": uniform_param(rng, (d_in, 4 * d_h)),
        f"{prefix}.Wh": uniform_param(rng, (d_h, 4 * d_h)),
        f"{prefix}.b": b,
    }


def gru_param_set(rng, d_in: int, d_h: int, prefix: str) -> dict:
    """GRU weights; gate order z (update), r (reset), n (candidate)."""
    return {
        f"{prefix}.Wx": uniform_param(rng, (d_in, 3 * d_h)),
        f"{prefix}.Whzr": uniform_param(rng, (d_h, 2 * d_h)),
        f"{prefix}.Whn": uniform_param(rng, (d_h, d_h)),
        f"{prefix}.b": zeros_param((1, 3 * d_h)),
    }


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: dict, prefix: str):
    """One LSTM step.

    i, f, o = sigmoid gates; g = tanh candidate;
    c' = f*c + i*g; h' = o * tanh(c').
    """
    d_h = h.shape[1]
    z = T.matmul(x, params[f"{prefix}.Wx"]) + T.matmul(h, params[f"{prefix}.Wh"])
    z = z + params[f"{prefix}.b"]
    i = T.sigmoid(T.slice_axis(z, 1, 0, d_h))
    f = T.sigmoid(T.slice_axis(z, 1, d_h, 2 * d_h))
    o = T.sigmoid(T.slice_axis(z, 1, 2 * d_h, 3 * d_h))
    g = T.tanh(T.slice_axis(z, 1, 3 * d_h, 4 * d_h))
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


def gru_cell(x: Tensor, h: Tensor, params: dict, prefix: str) -> Tensor:
    """One GRU step: h' = (1 - z)*h + z*tanh(Wn x + Un (r*h) + bn)."""
    d_h = h.shape[1]
    xz = T.matmul(x, params[f"{prefix}.Wx"]) + params[f"{prefix}.b"]
    hzr = T.matmul(h, params[f"{prefix}.Whzr"])
    z = T.sigmoid(T.slice_axis(xz, 1, 0, d_h) + T.slice_axis(hzr, 1, 0, d_h))
    r = T.sigmoid(T.slice_axis(xz, 1, d_h, 2 * d_h) + T.slice_axis(hzr, 1, d_h, 2 * d_h))
    n = T.tanh(T.slice_axis(xz, 1, 2 * d_h, 3 * d_h) + T.matmul(r * h, params[f"{prefix}.Whn"]))
    return (1.0 - z) * h + z * n


class EncodedSource:
    """Bidirectional encoder output plus the constant pooling machinery.

    ``annotations`` is ``[length * batch, annotation_dim]`` position-major;
    ``pool`` sums each example's positions, ``mean_pool`` averages its valid
    ones, ``spread`` replicates one row per example out to its positions and
    ``score_bias`` pushes padded positions to -inf before the attention
    softmax.  For a single unpadded sentence, ``annotations`` is exactly the
    ``[J, annotation_dim]`` per-position matrix.
    """

    def __init__(self, annotations: Tensor, batch: int, length: int, src_mask=None):
        self.annotations = annotations
        self.batch = batch
        self.length = length
        if src_mask is None:
            src_mask = np.ones((batch, length))
        self.src_mask = np.asarray(src_mask)

        b, s = batch, length
        pool = np.zeros((b, s * b))
        for j in range(s):
            pool[np.arange(b), j * b + np.arange(b)] = self.src_mask[:, j]
        counts = self.src_mask.sum(axis=1, keepdims=True)
        if np.any(counts <= 0):
            raise ShapeError("every example needs at least one source position")
        self.pool = _const(pool, annotations)
        self.mean_pool = _const(pool / counts, annotations)
        self.spread = _const(pool.T, annotations)
        self.score_bias = _const(np.where(self.src_mask > 0, 0.0, NEG_INF), annotations)

    @classmethod
    def from_annotations(cls, annotations: Tensor, rows: int = 1) -> "EncodedSource":
        """View one sentence's [J, 2h] annotations as a decoder batch of
        ``rows`` identical sources (used by beam search)."""
        j = annotations.shape[0]
        if j == 0:
            raise ShapeError("empty annotations")
        if rows == 1:
            return cls(annotations, 1, j)
        rep = np.zeros((j * rows, j))
        rep[np.arange(j * rows), np.repeat(np.arange(j), rows)] = 1.0
        tiled = T.matmul(_const(rep, annotations), annotations)
        return cls(tiled, rows, j)


def encode_batch(src_ids, src_mask, params: dict) -> EncodedSource:
    """Run the bidirectional LSTM over a padded ``[B, S]`` id matrix.

    Rows are left-aligned; masked positions freeze the forward state and
    keep the backward state at zero, so real positions get exactly the
    states an unpadded run would produce.
    """
    src_ids = np.asarray(src_ids)
    src_mask = np.asarray(src_mask)
    b, s = src_ids.shape
    if s == 0:
        raise ShapeError("encode: empty input")
    embed = params["embed"]
    d_h = params["fwd.Wh"].shape[0]
    columns = [T.lookup(embed, src_ids[:, j]) for j in range(s)]

    def run(direction: str, order):
        h = _const(np.zeros((b, d_h)), embed)
        c = _const(np.zeros((b, d_h)), embed)
        states = [None] * s
        for j in order:
            h2, c2 = lstm_cell(columns[j], h, c, params, direction)
            col = src_mask[:, j]
            if np.all(col == 1):
                h, c = h2, c2
            else:
                keep = _const(col[:, None], embed)
                h = keep * h2 + (1.0 - keep) * h
                c = keep * c2 + (1.0 - keep) * c
            states[j] = h
        return states

    fwd = run("fwd", range(s))
    bwd = run("bwd", range(s - 1, -1, -1))
    rows = [T.concat([fwd[j], bwd[j]], axis=1) for j in range(s)]
    annotations = rows[0] if s == 1 else T.concat(rows, axis=0)
    return EncodedSource(annotations, b, s, src_mask)


def encode(source_ids, params: dict) -> Tensor:
    """Annotations for one sentence: row j = [fwd state_j ; bwd state_j].

    ``source_ids`` must already include the sentence-final marker; the row
    count equals ``len(source_ids)``.
    """
    ids = list(source_ids)
    if not ids:
        raise ShapeError("encode: empty input")
    enc = encode_batch(np.asarray([ids]), np.ones((1, len(ids))), params)
    return enc.annotations


def _as_encoded(source) -> EncodedSource:
    if isinstance(source, EncodedSource):
        return source
    return EncodedSource.from_annotations(source)


def attend(state: Tensor, source, params: dict, projected=None):
    """MLP attention: e_j = v . tanh(W s + U h_j), alpha = softmax(e),
    context = sum_j alpha_j h_j.

    ``state`` carries one decoder state per row and must match the encoded
    batch size.  Returns (alpha ``[B, S]``, context ``[B, annotation_dim]``).
    ``projected`` optionally caches ``annotations @ U`` across decoder steps.
    """
    enc = _as_encoded(source)
    if state.shape[0] != enc.batch:
        raise ShapeError(
            f"attend: {state.shape[0]} decoder rows vs batch of {enc.batch}"
        )
    if projected is None:
        projected = T.matmul(enc.annotations, params["U"])
    ws = T.matmul(state, params["W"])
    scores = T.matmul(T.tanh(projected + T.matmul(enc.spread, ws)), params["v"])
    scores = T.transpose(scores.reshape(enc.length, enc.batch))
    if not np.all(enc.src_mask == 1):
        scores = scores + enc.score_bias
    alpha = T.softmax_rows(scores)
    weights = T.transpose(alpha).reshape(enc.length * enc.batch, 1)
    context = T.matmul(enc.pool, enc.annotations * weights)
    return alpha, context


def init_decoder(source, params: dict) -> Tensor:
    """Initial decoder state: tanh(W_init . mean of each example's annotations)."""
    enc = _as_encoded(source)
    mean = T.matmul(enc.mean_pool, enc.annotations)
    return T.tanh(T.matmul(mean, params["init.W"]))


def cond_gru_step(y_embed: Tensor, state: Tensor, source, dec_params: dict,
                  att_params: dict, projected=None):
    """Conditional GRU step: GRU1 on the fed-back embedding, an attention
    read from the intermediate state, then GRU2 on the context.

    Returns (new state, context, alpha).
    """
    enc = _as_encoded(source)
    mid = gru_cell(y_embed, state, dec_params, "gru1")
    alpha, context = attend(mid, enc, att_params, projected)
    new_state = gru_cell(context, mid, dec_params, "gru2")
    return new_state, context, alpha


def output_logits(state: Tensor, y_embed: Tensor, context: Tensor,
                  params: dict) -> Tensor:
    """Task head: Wo . tanh(Ws s + Wy y_prev + Wc context + b)."""
    hidden = T.matmul(state, params["Ws"]) + T.matmul(y_embed, params["Wy"])
    hidden = hidden + T.matmul(context, params["Wc"]) + params["b"]
    return T.matmul(T.tanh(hidden), params["Wo"])


def encoder_param_set(rng, dims: LayerDims, vocab_size: int) -> dict:
    params = {"embed": uniform_param(rng, (vocab_size, dims.embed))}
    params.update(lstm_param_set(rng, dims.embed, dims.enc_hidden, "fwd"))
    params.update(lstm_param_set(rng, dims.embed, dims.enc_hidden, "bwd"))
    return params


def attention_param_set(rng, dims: LayerDims) -> dict:
    return {
        "W": uniform_param(rng, (dims.dec_hidden, dims.attn_hidden)),
        "U": uniform_param(rng, (dims.annotation, dims.attn_hidden)),
        "v": uniform_param(rng, (dims.attn_hidden, 1)),
    }


def decoder_param_set(rng, dims: LayerDims, vocab_size: int) -> dict:
    params = {"embed": uniform_param(rng, (vocab_size, dims.embed))}
    params.update(gru_param_set(rng, dims.embed, dims.dec_hidden, "gru1"))
    params.update(gru_param_set(rng, dims.annotation, dims.dec_hidden, "gru2"))
    params["init.W"] = uniform_param(rng, (dims.annotation, dims.dec_hidden))
    return params


def output_param_set(rng, dims: LayerDims, vocab_size: int) -> dict:
    return {
        "Ws": uniform_param(rng, (dims.dec_hidden, dims.dec_hidden)),
        "Wy": uniform_param(rng, (dims.embed, dims.dec_hidden)),
        "Wc": uniform_param(rng, (dims.annotation, dims.dec_hidden)),
        "b": zeros_param((1, dims.dec_hidden)),
        "Wo": uniform_param(rng, (dims.dec_hidden, vocab_size)),
    }
