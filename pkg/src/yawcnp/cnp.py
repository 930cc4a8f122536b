"""Conditional neural process for yaw-rate regression.

A labeled context set is mapped pair-wise into fixed-size embeddings, the
embeddings are averaged into one permutation-invariant representation, and a
decoder turns that representation plus a target input into the mean and
variance of a Gaussian prediction.  Three multilayer perceptrons make up the
architecture: a feature encoder shared between context and target inputs, a
context encoder consuming feature encoding plus label, and the decoder.

Inputs and outputs are z-scored with statistics captured from the training
data and stored inside the model.  To make permutation invariance exact in
floating point rather than merely mathematical, context pairs are summed in
the order of a canonical content sort.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, EmptyContextError
from .network import Mlp, accumulate

SIGMA2_FLOOR = 1e-6

D_X = 3          # input channels: steering angle, speed, longitudinal acceleration
D_Y = 1          # output channel: yaw rate


@dataclass(frozen=True)
class GaussianPrediction:
    """Predictive mean [rad/s] and variance [(rad/s)^2] for one target."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.sigma2 >= SIGMA2_FLOOR):
            raise ValueError("prediction must be finite with sigma2 >= floor")


@dataclass
class NormStats:
    """Per-channel z-score statistics of (inputs..., yaw rate)."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def identity(cls) -> "NormStats":
        return cls(np.zeros(D_X), np.ones(D_X), 0.0, 1.0)

    @classmethod
    def from_data(cls, x: np.ndarray, y: np.ndarray) -> "NormStats":
        x_std = np.maximum(x.std(axis=0), 1e-8)
        y_std = max(float(y.std()), 1e-8)
        return cls(x.mean(axis=0), x_std, float(y.mean()), y_std)


@dataclass
class CnpModel:
    feature_encoder: Mlp
    context_encoder: Mlp
    decoder: Mlp
    d_e: int
    norm: NormStats

    @classmethod
    def create(cls, rng: np.random.Generator, *, d_e: int = 64,
               feature_hidden: tuple[int, ...] = (64,), feature_out: int | None = None,
               context_hidden: tuple[int, ...] = (128, 128),
               decoder_hidden: tuple[int, ...] = (64, 64, 64, 64)) -> "CnpModel":
        feature_out = d_e if feature_out is None else feature_out
        fe = Mlp.create([D_X, *feature_hidden, feature_out], rng)
        ce = Mlp.create([feature_out + D_Y, *context_hidden, d_e], rng)
        dec = Mlp.create([feature_out + d_e, *decoder_hidden, 2], rng)
        return cls(fe, ce, dec, d_e, NormStats.identity())

    @property
    def d_feat(self) -> int:
        return self.feature_encoder.sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        return (self.feature_encoder.flat_params()
                + self.context_encoder.flat_params()
                + self.decoder.flat_params())

    def copy_parameters(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def load_parameters(self, values: list[np.ndarray]) -> None:
        for p, v in zip(self.parameters(), values, strict=True):
            p[...] = v


# ---------------------------------------------------------------------------
# forward pieces


def _canonical_order(cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """Content-based total order of context pairs; ties are identical rows."""
    table = np.column_stack([cx, cy])
    return np.lexsort(table.T[::-1])


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_context(cx: np.ndarray, cy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cx = np.atleast_2d(np.asarray(cx, dtype=float))
    cy = np.asarray(cy, dtype=float).reshape(-1)
    if cx.shape[0] == 0:
        raise EmptyContextError("context set must not be empty")
    if cx.shape[0] != cy.shape[0]:
        raise DimensionMismatchError("context inputs and labels must align")
    if cx.shape[1] != D_X:
        raise DimensionMismatchError(f"context inputs must have {D_X} channels")
    return cx, cy


def encode_context(model: CnpModel, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """Per-pair embeddings of a labeled context set, one row per pair."""
    cx, cy = _check_context(cx, cy)
    xn = (cx - model.norm.x_mean) / model.norm.x_std
    yn = (cy - model.norm.y_mean) / model.norm.y_std
    feats = model.feature_encoder.forward(xn)
    return model.context_encoder.forward(np.column_stack([feats, yn]))


def aggregate(embeddings: np.ndarray) -> np.ndarray:
    """Arithmetic mean of embeddings, summed in a canonical sorted order."""
    e = np.atleast_2d(np.asarray(embeddings, dtype=float))
    if e.shape[0] == 0:
        raise EmptyContextError("cannot aggregate an empty embedding set")
    order = np.lexsort(e.T[::-1])
    return e[order].sum(axis=0) / e.shape[0]


def decode(model: CnpModel, x_target: np.ndarray, e: np.ndarray) -> GaussianPrediction:
    """Gaussian prediction for one target input given an aggregated embedding."""
    e = np.asarray(e, dtype=float).reshape(-1)
    if e.shape[0] != model.d_e:
        raise DimensionMismatchError(f"embedding must have length {model.d_e}")
    mu, sigma2 = _decode_arrays(model, np.atleast_2d(np.asarray(x_target, dtype=float)), e)
    return GaussianPrediction(float(mu[0]), float(sigma2[0]))


def _decode_arrays(model: CnpModel, tx: np.ndarray, e: np.ndarray):
    tn = (tx - model.norm.x_mean) / model.norm.x_std
    feats = model.feature_encoder.forward(tn)
    dec_in = np.column_stack([feats, np.tile(e, (tx.shape[0], 1))])
    d = model.decoder.forward(dec_in)
    mu = d[:, 0] * model.norm.y_std + model.norm.y_mean
    sigma2 = SIGMA2_FLOOR + _softplus(d[:, 1]) * model.norm.y_std ** 2
    return mu, sigma2


def predict_arrays(model: CnpModel, cx: np.ndarray, cy: np.ndarray,
                   tx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized prediction: (means, variances) for every target input.

    The context is encoded once and aggregated once, then every target is
    decoded against the single representation, so the cost is linear in
    context size plus target count.
    """
    cx, cy = _check_context(cx, cy)
    tx = np.asarray(tx, dtype=float).reshape(-1, D_X)
    if tx.shape[0] == 0:
        return np.empty(0), np.empty(0)
    order = _canonical_order(cx, cy)
    emb = encode_context(model, cx[order], cy[order])
    e = emb.sum(axis=0) / emb.shape[0]
    return _decode_arrays(model, tx, e)


def predict(model: CnpModel, cx: np.ndarray, cy: np.ndarray,
            tx: np.ndarray) -> list[GaussianPrediction]:
    mu, sigma2 = predict_arrays(model, cx, cy, tx)
    return [GaussianPrediction(float(m), float(s)) for m, s in zip(mu, sigma2)]


def gaussian_nll(mu: np.ndarray, sigma2: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log likelihood of targets under factorized Gaussians."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    sigma2 = np.asarray(sigma2, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if not (len(mu) == len(sigma2) == len(y)) or len(y) == 0:
        raise DimensionMismatchError("predictions and targets must have equal nonzero length")
    return float(np.mean(0.5 * np.log(2.0 * np.pi * sigma2) + (y - mu) ** 2 / (2.0 * sigma2)))


def gaussian_nll_preds(preds: list[GaussianPrediction], y) -> float:
    mu = np.array([p.mu for p in preds])
    sigma2 = np.array([p.sigma2 for p in preds])
    return gaussian_nll(mu, sigma2, y)


# ---------------------------------------------------------------------------
# reverse-mode gradients of gaussian_nll(predict(...))


def backward(model: CnpModel, cx: np.ndarray, cy: np.ndarray, tx: np.ndarray,
             ty: np.ndarray) -> tuple[float, list]:
    """Loss and exact gradients for one task batch.

    Returns per-network gradient lists ordered like ``model.parameters()``
    (feature encoder, context encoder, decoder).  The mean aggregation routes
    1/N of the upstream embedding gradient into every context pair, and the
    feature encoder accumulates contributions from both the context and the
    target path.
    """
    cx, cy = _check_context(cx, cy)
    tx = np.asarray(tx, dtype=float).reshape(-1, D_X)
    ty = np.asarray(ty, dtype=float).reshape(-1)
    n_ctx, n_tgt = cx.shape[0], tx.shape[0]
    if n_tgt == 0 or n_tgt != ty.shape[0]:
        raise DimensionMismatchError("targets and labels must align and be non-empty")
    norm = model.norm

    order = _canonical_order(cx, cy)
    xn_c = (cx[order] - norm.x_mean) / norm.x_std
    yn_c = ((cy[order] - norm.y_mean) / norm.y_std)[:, None]

    feats_c, cache_fc = model.feature_encoder.forward_cached(xn_c)
    emb, cache_ce = model.context_encoder.forward_cached(
        np.column_stack([feats_c, yn_c]))
    e = emb.sum(axis=0) / n_ctx

    xn_t = (tx - norm.x_mean) / norm.x_std
    feats_t, cache_ft = model.feature_encoder.forward_cached(xn_t)
    dec_in = np.column_stack([feats_t, np.tile(e, (n_tgt, 1))])
    d, cache_d = model.decoder.forward_cached(dec_in)

    mu = d[:, 0] * norm.y_std + norm.y_mean
    raw = d[:, 1]
    sigma2 = SIGMA2_FLOOR + _softplus(raw) * norm.y_std ** 2
    resid = ty - mu
    loss = float(np.mean(0.5 * np.log(2.0 * np.pi * sigma2) + resid ** 2 / (2.0 * sigma2)))

    # dL/d mu and dL/d sigma2, then chain through the de-normalization
    d_mu = -resid / sigma2 / n_tgt
    d_sigma2 = (0.5 / sigma2 - 0.5 * resid ** 2 / sigma2 ** 2) / n_tgt
    dd = np.column_stack([d_mu * norm.y_std,
                          d_sigma2 * _sigmoid(raw) * norm.y_std ** 2])

    grads_dec, d_dec_in = model.decoder.backward(cache_d, dd)
    d_feat = model.d_feat
    d_feats_t = d_dec_in[:, :d_feat]
    d_e = d_dec_in[:, d_feat:].sum(axis=0)

    grads_fe, _ = model.feature_encoder.backward(cache_ft, d_feats_t)

    d_emb = np.tile(d_e / n_ctx, (n_ctx, 1))
    grads_ce, d_enc_in = model.context_encoder.backward(cache_ce, d_emb)
    grads_fe_c, _ = model.feature_encoder.backward(cache_fc, d_enc_in[:, :d_feat])
    accumulate(grads_fe, grads_fe_c)

    flat = []
    for per_layer in (grads_fe, grads_ce, grads_dec):
        for gw, gb in per_layer:
            flat.extend((gw, gb))
    return loss, flat


# ---------------------------------------------------------------------------
# checkpoint format: one JSON header line, then raw little-endian float64
# parameter data followed by the normalization statistics

FORMAT_VERSION = 1


def save_checkpoint(model: CnpModel, path: str | Path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "d_e": model.d_e,
        "feature_sizes": model.feature_encoder.sizes,
        "context_sizes": model.context_encoder.sizes,
        "decoder_sizes": model.decoder.sizes,
    }
    blobs = [p.astype("<f8").tobytes() for p in model.parameters()]
    norm = model.norm
    stats = np.concatenate([norm.x_mean, norm.x_std, [norm.y_mean, norm.y_std]])
    blobs.append(stats.astype("<f8").tobytes())
    with Path(path).open("wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> CnpModel:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
        data = np.frombuffer(fh.read(), dtype="<f8")

    def build(sizes):
        return Mlp([(np.zeros((i, o)), np.zeros(o))
                    for i, o in zip(sizes[:-1], sizes[1:])])

    model = CnpModel(build(header["feature_sizes"]), build(header["context_sizes"]),
                     build(header["decoder_sizes"]), int(header["d_e"]),
                     NormStats.identity())
    offset = 0
    for p in model.parameters():
        n = p.size
        p[...] = data[offset:offset + n].reshape(p.shape)
        offset += n
    stats = data[offset:offset + 2 * D_X + 2]
    if stats.size != 2 * D_X + 2 or offset + stats.size != data.size:
        raise ValueError("checkpoint payload size mismatch")
    model.norm = NormStats(stats[:D_X].copy(), stats[D_X:2 * D_X].copy(),
                           float(stats[2 * D_X]), float(stats[2 * D_X + 1]))
    return model
