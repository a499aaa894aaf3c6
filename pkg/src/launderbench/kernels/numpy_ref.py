"""Pure-numpy reference implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable (or
when LAUNDERBENCH_PURE=1).  They must stay numerically equivalent to the
Cython versions in _hot.pyx; the test suite compares both paths.
"""

import numpy as np

_CHUNK = 32768


def rir_accumulate(taps: np.ndarray, delays: np.ndarray, amps: np.ndarray, half: int) -> None:
    """Scatter-add windowed-sinc arrivals into ``taps`` in place.

    Each arrival i deposits amps[i] * sinc(k - frac) * hann(k - frac) at
    tap indices floor(delays[i]) + k for k in [-half, half].  Out-of-range
    taps are dropped.
    """
    n_taps = taps.size
    offs = np.arange(-half, half + 1)
    for start in range(0, delays.size, _CHUNK):
        d = delays[start:start + _CHUNK]
        a = amps[start:start + _CHUNK]
        i0 = np.floor(d).astype(np.int64)
        u = offs[None, :] - (d - i0)[:, None]
        vals = a[:, None] * np.sinc(u) * (0.5 * (1.0 + np.cos(np.pi * u / (half + 1))))
        idx = i0[:, None] + offs[None, :]
        ok = (idx >= 0) & (idx < n_taps)
        taps += np.bincount(idx[ok], weights=vals[ok], minlength=n_taps)


def cqt_direct(x: np.ndarray, fs: float, freqs: np.ndarray, lengths: np.ndarray,
               hop: int, n_frames: int) -> np.ndarray:
    """Direct constant-Q transform by per-bin windowed inner products.

    Frame t of bin k is the inner product of x around center t*hop with a
    Hamming-windowed complex exponential of length lengths[k], normalized
    by the window length.  Windows extending past the signal see zeros.

    Returns a complex128 matrix of shape (n_frames, n_bins).
    """
    n_bins = freqs.size
    pad = int(lengths.max()) + 1
    xp = np.concatenate([np.zeros(pad), np.asarray(x, dtype=np.float64), np.zeros(pad)])
    out = np.empty((n_frames, n_bins), dtype=np.complex128)
    for k in range(n_bins):
        n_k = int(lengths[k])
        n = np.arange(n_k)
        if n_k > 1:
            win = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (n_k - 1))
        else:
            win = np.ones(1)
        phase = 2.0 * np.pi * freqs[k] / fs * n
        ker_re = win * np.cos(phase) / n_k
        ker_im = -win * np.sin(phase) / n_k
        for t in range(n_frames):
            start = pad + t * hop - n_k // 2
            seg = xp[start:start + n_k]
            out[t, k] = complex(np.dot(seg, ker_re), np.dot(seg, ker_im))
    return out
