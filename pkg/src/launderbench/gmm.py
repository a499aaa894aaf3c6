"""Diagonal-covariance Gaussian mixture back-end.

Training runs k-means++ seeding, a few Lloyd iterations, then a fixed number
of EM iterations with a variance floor tied to the global per-dimension
variance.  Scoring is the per-frame log-likelihood ratio between the
bonafide and spoof models, averaged over frames so utterance length does
not move the score scale.

All accumulations run over fixed-order frame chunks, so results do not
depend on how a corpus was split across workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelError, ModelFileError
from .features import FeatureMatrix

_MAGIC = b"LBGM"
_VERSION = 1
_KIND_CODES = {"lfcc": 0, "cqcc": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_CHUNK = 8192


@dataclass
class GmmModel:
    """Mixture weights, means, and diagonal variances for one class."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D)
    trained_on: str  # feature kind tag
    log_likelihoods: list = field(default_factory=list, repr=False)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dims(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        if abs(self.weights.sum() - 1.0) > 1e-9 or (self.weights < 0).any():
            raise ModelError("weights must be a simplex vector")
        if (self.variances <= 0).any():
            raise ModelError("variances must be strictly positive")
        for a in (self.weights, self.means, self.variances):
            if not np.all(np.isfinite(a)):
                raise ModelError("model parameters must be finite")


@dataclass(frozen=True)
class TrainConfig:
    n_components: int = 512  # desk-scale tests use 8
    em_iters: int = 10
    kmeans_iters: int = 10
    var_floor_factor: float = 1e-3  # of global per-dimension variance
    seed: int = 0

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.em_iters < 1:
            raise ValueError("em_iters must be >= 1")


def _pool(frames) -> np.ndarray:
    if isinstance(frames, FeatureMatrix):
        x = frames.values
    else:
        x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ModelError("training frames must be a non-empty 2-D array")
    if not np.all(np.isfinite(x)):
        raise ModelError("training frames contain non-finite values")
    return x


def _weighted_choice(values_cumsum: np.ndarray, u: float) -> int:
    """Index drawn by one uniform variate against a cumulative weight vector.

    Selection by cumulative mass makes the draw invariant to interleaved
    duplication of the dataset, which keeps seeded runs comparable across
    repeated corpora.
    """
    total = values_cumsum[-1]
    return int(np.searchsorted(values_cumsum, u * total, side="right"))


def kmeans_init(frames, cfg: TrainConfig) -> GmmModel:
    """k-means++ seeding plus Lloyd iterations, converted to a mixture.

    Means are the centroids; variances the per-cluster diagonal variances
    (floored); weights the cluster occupancies.
    """
    x = _pool(frames)
    n, d = x.shape
    k = cfg.n_components
    if n < k:
        raise ModelError(f"need at least {k} frames to seed {k} components, got {n}")
    rng = np.random.default_rng(cfg.seed)
    floor = np.maximum(cfg.var_floor_factor * x.var(axis=0), 1e-12)

    centers = np.empty((k, d))
    centers[0] = x[_weighted_choice(np.arange(1.0, n + 1.0), rng.random())]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        cum = np.cumsum(d2)
        if cum[-1] <= 0:
            idx = _weighted_choice(np.arange(1.0, n + 1.0), rng.random())
        else:
            idx = _weighted_choice(cum, rng.random())
        centers[i] = x[min(idx, n - 1)]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))

    def assign_to(cent: np.ndarray) -> np.ndarray:
        out = np.empty(n, dtype=np.int64)
        for s in range(0, n, _CHUNK):
            block = x[s:s + _CHUNK]
            dd = ((block[:, None, :] - cent[None, :, :]) ** 2).sum(axis=2)
            out[s:s + block.shape[0]] = dd.argmin(axis=1)
        return out

    assign = assign_to(centers)
    for _ in range(cfg.kmeans_iters):
        for i in range(k):
            members = x[assign == i]
            if members.shape[0] == 0:
                # re-seed an empty cluster at the point farthest from its center
                far = ((x - centers[assign]) ** 2).sum(axis=1).argmax()
                centers[i] = x[far]
                assign[far] = i
                members = x[far:far + 1]
            centers[i] = members.mean(axis=0)
        assign = assign_to(centers)
    for i in range(k):
        if not (assign == i).any():
            far = ((x - centers[assign]) ** 2).sum(axis=1).argmax()
            assign[far] = i

    weights = np.bincount(assign, minlength=k).astype(np.float64) / n
    variances = np.empty((k, d))
    for i in range(k):
        members = x[assign == i]
        variances[i] = members.var(axis=0) if members.shape[0] else 0.0
    variances = np.maximum(variances, floor)
    model = GmmModel(weights, centers, variances, trained_on="lfcc")
    return model


def _log_gauss(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(n, K) log densities of diagonal Gaussians."""
    inv = 1.0 / model.variances  # (K, D)
    const = -0.5 * (
        model.dims * np.log(2.0 * np.pi) + np.log(model.variances).sum(axis=1)
    )  # (K,)
    quad = (
        (x ** 2) @ inv.T
        - 2.0 * (x @ (model.means * inv).T)
        + ((model.means ** 2) * inv).sum(axis=1)[None, :]
    )
    return const[None, :] - 0.5 * quad


def _log_mixture(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(n,) log of the weighted mixture density via log-sum-exp."""
    lg = _log_gauss(model, x) + np.log(model.weights)[None, :]
    peak = lg.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(lg - peak).sum(axis=1, keepdims=True))).ravel()


def log_likelihood(model: GmmModel, frame: np.ndarray) -> float:
    """Log mixture density of a single frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (model.dims,):
        raise ModelError(f"frame has shape {frame.shape}, expected ({model.dims},)")
    return float(_log_mixture(model, frame[None, :])[0])


def frame_log_likelihoods(model: GmmModel, features: FeatureMatrix) -> np.ndarray:
    if features.dims != model.dims:
        raise ModelError(f"feature dims {features.dims} != model dims {model.dims}")
    out = np.empty(features.frames)
    for s in range(0, features.frames, _CHUNK):
        out[s:s + _CHUNK] = _log_mixture(model, features.values[s:s + _CHUNK])
    return out


def em_train(frames, cfg: TrainConfig, trained_on: str = "lfcc") -> GmmModel:
    """EM refinement of the k-means seed.

    Each iteration records the mean log-likelihood before its update, plus
    one final value, so model.log_likelihoods has em_iters + 1 entries and
    must be non-decreasing.
    """
    x = _pool(frames)
    n, d = x.shape
    floor = np.maximum(cfg.var_floor_factor * x.var(axis=0), 1e-12)
    model = kmeans_init(x, cfg)
    model.trained_on = trained_on

    curve = []
    for _ in range(cfg.em_iters):
        # E-step in fixed-order chunks
        nk = np.zeros(model.n_components)
        sum_x = np.zeros((model.n_components, d))
        sum_x2 = np.zeros((model.n_components, d))
        ll_total = 0.0
        for s in range(0, n, _CHUNK):
            block = x[s:s + _CHUNK]
            lg = _log_gauss(model, block) + np.log(model.weights)[None, :]
            peak = lg.max(axis=1, keepdims=True)
            norm = peak + np.log(np.exp(lg - peak).sum(axis=1, keepdims=True))
            ll_total += norm.sum()
            resp = np.exp(lg - norm)
            nk += resp.sum(axis=0)
            sum_x += resp.T @ block
            sum_x2 += resp.T @ (block ** 2)
        curve.append(ll_total / n)
        # M-step with flooring
        nk = np.maximum(nk, 1e-12)
        model.weights = nk / nk.sum()
        model.means = sum_x / nk[:, None]
        model.variances = np.maximum(sum_x2 / nk[:, None] - model.means ** 2, floor)
    ll_final = 0.0
    for s in range(0, n, _CHUNK):
        ll_final += _log_mixture(model, x[s:s + _CHUNK]).sum()
    curve.append(ll_final / n)
    model.log_likelihoods = curve
    model.trained_on = trained_on
    model.validate()
    return model


def llr_score(bonafide: GmmModel, spoof: GmmModel, features: FeatureMatrix) -> float:
    """Mean per-frame log-likelihood ratio; higher means more bonafide."""
    if bonafide.trained_on != spoof.trained_on:
        raise ModelError("models were trained on different feature kinds")
    if bonafide.trained_on != features.feature_kind:
        raise ModelError(
            f"models trained on {bonafide.trained_on!r} cannot score "
            f"{features.feature_kind!r} features"
        )
    if bonafide.dims != spoof.dims:
        raise ModelError("model dimensionality mismatch")
    return float(
        np.mean(frame_log_likelihoods(bonafide, features)
                - frame_log_likelihoods(spoof, features))
    )


def save_model(model: GmmModel, path) -> None:
    """Write the LBGM container; parameters round-trip bit-exactly."""
    model.validate()
    head = _MAGIC + struct.pack(
        "<IIIB", _VERSION, model.n_components, model.dims,
        _KIND_CODES[model.trained_on],
    )
    body = (
        model.weights.astype("<f8").tobytes()
        + model.means.astype("<f8").tobytes()
        + model.variances.astype("<f8").tobytes()
    )
    Path(path).write_bytes(head + body)


def load_model(path) -> GmmModel:
    data = Path(path).read_bytes()
    if len(data) < 17 or data[:4] != _MAGIC:
        raise ModelFileError(f"{path}: not an LBGM model file")
    version, k, d, kind = struct.unpack_from("<IIIB", data, 4)
    if version != _VERSION:
        raise ModelFileError(f"{path}: unsupported version {version}")
    if kind not in _KIND_NAMES:
        raise ModelFileError(f"{path}: unknown feature kind byte {kind}")
    need = 17 + 8 * (k + 2 * k * d)
    if len(data) < need:
        raise ModelFileError(f"{path}: truncated ({len(data)} of {need} bytes)")
    weights = np.frombuffer(data, "<f8", k, 17).copy()
    means = np.frombuffer(data, "<f8", k * d, 17 + 8 * k).reshape(k, d).copy()
    variances = np.frombuffer(data, "<f8", k * d, 17 + 8 * k * (1 + d)).reshape(k, d).copy()
    model = GmmModel(weights, means, variances, _KIND_NAMES[kind])
    model.validate()
    return model
