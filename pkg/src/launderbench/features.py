"""Hand-crafted cepstral front-ends for the conventional countermeasures.

LFCC: Hamming-windowed power spectrum, 20 triangular filters linearly spaced
over [0, Nyquist], log with a floor, orthonormal DCT-II, first 20 cepstra.
CQCC: direct constant-Q transform on a geometric frequency grid, log power
spectrum rewarped onto a uniform grid by linear interpolation, orthonormal
DCT-II, first 30 cepstra.  Both append delta and delta-delta regressions.

The CQT is computed by per-bin windowed inner products (see kernels/),
which is easy to verify against a tone oracle; a fast recursive CQT is
deliberately not used.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .audio import AudioBuffer
from .errors import FeatureError, FeatureFileError
from .kernels import cqt_direct

WORKING_RATE_HZ = 16000

_KIND_CODES = {"lfcc": 0, "cqcc": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_MAGIC = b"LBFM"
_VERSION = 1


@dataclass(frozen=True)
class FeatureMatrix:
    """frames x dims real matrix of cepstral features."""

    values: np.ndarray
    feature_kind: str

    def __post_init__(self):
        if self.feature_kind not in _KIND_CODES:
            raise ValueError(f"feature_kind must be one of {sorted(_KIND_CODES)}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("values must be 2-D (frames x dims)")
        if not np.all(np.isfinite(v)):
            raise FeatureError("feature matrix contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LfccConfig:
    window_ms: float = 20.0
    hop_ms: float = 10.0
    fft_size: int = 512
    n_filters: int = 20
    n_coeffs: int = 20  # includes c0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_coeffs > self.n_filters:
            raise ValueError("n_coeffs must be <= n_filters")
        if self.window_ms < self.hop_ms:
            raise ValueError("window must be at least one hop long")


@dataclass(frozen=True)
class CqccConfig:
    bins_per_octave: int = 96
    n_octaves: int = 9
    fmax_hz: float | None = None  # defaults to Nyquist
    n_coeffs: int = 30  # includes c0
    hop_samples: int = 256
    resample_points: int | None = None  # defaults to the total bin count
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.bins_per_octave < 1:
            raise ValueError("bins_per_octave must be >= 1")
        if self.n_octaves < 1:
            raise ValueError("n_octaves must be >= 1")

    def fmin_hz(self, sample_rate_hz: int) -> float:
        return self.fmax(sample_rate_hz) / 2.0 ** self.n_octaves

    def fmax(self, sample_rate_hz: int) -> float:
        return self.fmax_hz if self.fmax_hz is not None else sample_rate_hz / 2.0

    def n_bins(self) -> int:
        return self.bins_per_octave * self.n_octaves


def frame_signal(audio: AudioBuffer, window_ms: float, hop_ms: float) -> np.ndarray:
    """Hamming-windowed frames, no padding: 1 + floor((N - W) / H) rows."""
    w = int(round(audio.sample_rate_hz * window_ms / 1000.0))
    h = int(round(audio.sample_rate_hz * hop_ms / 1000.0))
    n = len(audio)
    if n < w:
        raise FeatureError(f"audio of {n} samples is shorter than one {w}-sample window")
    n_frames = 1 + (n - w) // h
    idx = np.arange(w)[None, :] + h * np.arange(n_frames)[:, None]
    return audio.samples[idx] * np.hamming(w)[None, :]


@lru_cache(maxsize=8)
def dct_matrix(size: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are basis vectors (D @ D.T = I)."""
    n = np.arange(size)
    d = np.cos(np.pi * np.outer(n, 2 * n + 1) / (2.0 * size)) * np.sqrt(2.0 / size)
    d[0] /= np.sqrt(2.0)
    return d


@lru_cache(maxsize=8)
def linear_triangle_bank(n_filters: int, fft_size: int, sample_rate_hz: int) -> np.ndarray:
    """Triangular filters linearly spaced over [0, Nyquist], peak gain 1."""
    nyq = sample_rate_hz / 2.0
    edges = np.linspace(0.0, nyq, n_filters + 2)
    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    bank = np.zeros((n_filters, bin_freqs.size))
    for i in range(n_filters):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (bin_freqs - lo) / (mid - lo)
        down = (hi - bin_freqs) / (hi - mid)
        bank[i] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def append_deltas(static: FeatureMatrix) -> FeatureMatrix:
    """[static, delta, delta-delta] with 2-frame regression deltas.

    delta_t = sum_{tau=1..2} tau * (c_{t+tau} - c_{t-tau}) / 10, frames
    replicated at the edges, so a constant track has zero deltas and a
    single frame degenerates to zeros.
    """
    def regress(x: np.ndarray) -> np.ndarray:
        padded = np.pad(x, ((2, 2), (0, 0)), mode="edge")
        return (
            1.0 * (padded[3:-1] - padded[1:-3]) + 2.0 * (padded[4:] - padded[:-4])
        ) / 10.0

    d1 = regress(static.values)
    d2 = regress(d1)
    return FeatureMatrix(np.hstack([static.values, d1, d2]), static.feature_kind)


def lfcc(audio: AudioBuffer, cfg: LfccConfig = LfccConfig()) -> FeatureMatrix:
    """Linear-frequency cepstral coefficients with deltas (60 dims default)."""
    if audio.sample_rate_hz != WORKING_RATE_HZ:
        raise FeatureError(
            f"lfcc expects {WORKING_RATE_HZ} Hz input, got {audio.sample_rate_hz} Hz"
        )
    frames = frame_signal(audio, cfg.window_ms, cfg.hop_ms)
    power = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1)) ** 2
    bank = linear_triangle_bank(cfg.n_filters, cfg.fft_size, audio.sample_rate_hz)
    energies = power @ bank.T
    logs = np.log(np.maximum(energies, cfg.log_floor))
    cepstra = logs @ dct_matrix(cfg.n_filters).T[:, : cfg.n_coeffs]
    return append_deltas(FeatureMatrix(cepstra, "lfcc"))


@dataclass(frozen=True)
class CqtMatrix:
    """Complex constant-Q spectrogram plus its frequency geometry."""

    values: np.ndarray  # (frames, bins) complex
    freqs_hz: np.ndarray
    window_lengths: np.ndarray
    hop_samples: int
    padded_bins: np.ndarray  # bins whose window exceeded the signal length


def cqt(audio: AudioBuffer, cfg: CqccConfig = CqccConfig()) -> CqtMatrix:
    """Direct constant-Q transform on the geometric grid fmin * 2^(k/B).

    Q = 1 / (2^(1/B) - 1) and the per-bin window length is round(Q fs / fk).
    Windows longer than the signal see zero padding and are flagged.
    """
    fs = audio.sample_rate_hz
    fmin = cfg.fmin_hz(fs)
    if fmin < 10.0:
        raise FeatureError(f"fmin {fmin:.3f} Hz below the 10 Hz floor")
    if len(audio) == 0:
        raise FeatureError("empty audio")
    k = np.arange(cfg.n_bins())
    freqs = fmin * 2.0 ** (k / cfg.bins_per_octave)
    q = 1.0 / (2.0 ** (1.0 / cfg.bins_per_octave) - 1.0)
    lengths = np.round(q * fs / freqs).astype(np.int64)
    n_frames = 1 + (len(audio) - 1) // cfg.hop_samples
    values = cqt_direct(audio.samples, float(fs), freqs, lengths,
                        cfg.hop_samples, n_frames)
    return CqtMatrix(values, freqs, lengths, cfg.hop_samples,
                     padded_bins=np.flatnonzero(lengths > len(audio)))


def cqcc(audio: AudioBuffer, cfg: CqccConfig = CqccConfig()) -> FeatureMatrix:
    """Constant-Q cepstral coefficients with deltas (90 dims default).

    The log power spectrum is rewarped from the geometric bin grid onto a
    uniform grid (linear interpolation; endpoints land exactly on the first
    and last bins) before the DCT.
    """
    if audio.sample_rate_hz != WORKING_RATE_HZ:
        raise FeatureError(
            f"cqcc expects {WORKING_RATE_HZ} Hz input, got {audio.sample_rate_hz} Hz"
        )
    spec = cqt(audio, cfg)
    logs = np.log(np.abs(spec.values) ** 2 + cfg.log_floor)
    points = cfg.resample_points if cfg.resample_points is not None else cfg.n_bins()
    uniform = np.linspace(spec.freqs_hz[0], spec.freqs_hz[-1], points)
    rewarped = np.empty((logs.shape[0], points))
    for t in range(logs.shape[0]):
        rewarped[t] = np.interp(uniform, spec.freqs_hz, logs[t])
    cepstra = rewarped @ dct_matrix(points).T[:, : cfg.n_coeffs]
    return append_deltas(FeatureMatrix(cepstra, "cqcc"))


def save_features(features: FeatureMatrix, path) -> None:
    """Write the LBFM container: header + float32 LE row-major values."""
    head = _MAGIC + struct.pack(
        "<IIIB", _VERSION, features.frames, features.dims,
        _KIND_CODES[features.feature_kind],
    )
    Path(path).write_bytes(head + features.values.astype("<f4").tobytes())


def load_features(path) -> FeatureMatrix:
    """Read an LBFM feature file written by save_features."""
    data = Path(path).read_bytes()
    if len(data) < 17 or data[:4] != _MAGIC:
        raise FeatureFileError(f"{path}: not an LBFM feature file")
    version, frames, dims, kind = struct.unpack_from("<IIIB", data, 4)
    if version != _VERSION:
        raise FeatureFileError(f"{path}: unsupported version {version}")
    if kind not in _KIND_NAMES:
        raise FeatureFileError(f"{path}: unknown feature kind byte {kind}")
    need = 17 + 4 * frames * dims
    if len(data) < need:
        raise FeatureFileError(f"{path}: truncated ({len(data)} of {need} bytes)")
    values = np.frombuffer(data, dtype="<f4", count=frames * dims, offset=17)
    return FeatureMatrix(values.reshape(frames, dims).astype(np.float64),
                         _KIND_NAMES[kind])
