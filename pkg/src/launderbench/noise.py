"""Additive-noise laundering: noise bank, length fitting, exact-SNR mixing.

SNR is measured over full-utterance RMS (no voice-activity weighting), and
the mixing gain is solved exactly from the two RMS values, so the delivered
SNR equals the target by construction.  Mixed output is not renormalized;
it may exceed [-1, 1] and is clipped only by the 16-bit writer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer, SeedContext, rms, read_wav, rng_for
from .errors import NoiseBankError, SilentSignalError, UnknownNoiseError

NOISE_NAMES = ("white", "babble", "volvo", "cafe", "street")
SYNTHETIC_WHITE = "synthetic-white"
WHITE_NOISE_STD = 0.1


@dataclass(frozen=True)
class SnrTarget:
    """Target signal-to-noise ratio in dB; grid runs use {0, 10, 20}."""

    snr_db: float

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")


@dataclass
class NoiseBank:
    """Named noise sources: file-backed buffers or the synthetic-white tag."""

    entries: dict[str, AudioBuffer | str] = field(default_factory=dict)

    @classmethod
    def from_manifest(cls, paths: dict[str, str], sample_rate_hz: int) -> "NoiseBank":
        """Load file-backed noises, resampling to the working rate if needed.

        "white" defaults to the synthetic generator when no file is given.
        All problems (missing files, silent or unreadable entries) are
        collected and reported together.
        """
        from .channel import resample  # local import to avoid a cycle

        entries: dict[str, AudioBuffer | str] = {"white": SYNTHETIC_WHITE}
        problems = []
        for name, path in sorted(paths.items()):
            if name not in NOISE_NAMES:
                problems.append(f"unknown noise name {name!r}")
                continue
            try:
                buf = read_wav(path)
            except FileNotFoundError:
                problems.append(f"{name}: file not found: {path}")
                continue
            except Exception as exc:  # malformed file: keep collecting
                problems.append(f"{name}: {exc}")
                continue
            if buf.sample_rate_hz != sample_rate_hz:
                buf = resample(buf, sample_rate_hz)
            if rms(buf) == 0.0:
                problems.append(f"{name}: noise file is silent: {path}")
                continue
            entries[name] = buf
        if problems:
            raise NoiseBankError("noise bank incomplete:\n  " + "\n  ".join(problems))
        return cls(entries)

    def names(self) -> list[str]:
        return sorted(self.entries)


def generate_white_noise(n_samples: int, ctx: SeedContext,
                         sample_rate_hz: int = 16000) -> AudioBuffer:
    """Gaussian white noise, zero mean, std 0.1, deterministic under ctx."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = rng_for(ctx).normal(0.0, WHITE_NOISE_STD, n_samples)
    return AudioBuffer(x, sample_rate_hz)


def fit_noise_to_length(noise: AudioBuffer, n_samples: int, ctx: SeedContext) -> AudioBuffer:
    """Cut n_samples from the noise at a random offset, wrapping circularly."""
    if len(noise) == 0:
        raise SilentSignalError("cannot fit an empty noise buffer")
    offset = int(rng_for(ctx).integers(0, len(noise)))
    idx = (offset + np.arange(n_samples)) % len(noise)
    return AudioBuffer(noise.samples[idx], noise.sample_rate_hz)


def mix_at_snr(signal: AudioBuffer, noise: AudioBuffer, target: SnrTarget) -> AudioBuffer:
    """signal + g * noise with g solved so the delivered SNR is exact."""
    if len(signal) != len(noise):
        raise ValueError(f"length mismatch: signal {len(signal)} vs noise {len(noise)}")
    if signal.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError("sample rate mismatch between signal and noise")
    s_rms = rms(signal)
    n_rms = rms(noise)
    if s_rms == 0.0 or n_rms == 0.0:
        raise SilentSignalError("undefined SNR: silent signal or noise")
    gain = s_rms / (n_rms * 10.0 ** (target.snr_db / 20.0))
    return AudioBuffer(signal.samples + gain * noise.samples, signal.sample_rate_hz)


def apply_noise_attack(signal: AudioBuffer, bank: NoiseBank, noise_name: str,
                       target: SnrTarget, ctx: SeedContext) -> AudioBuffer:
    """Fit the named noise to the signal length and mix at the target SNR."""
    try:
        entry = bank.entries[noise_name]
    except KeyError:
        raise UnknownNoiseError(
            f"unknown noise {noise_name!r}; bank has {bank.names()}"
        ) from None
    if isinstance(entry, str):  # synthetic-white tag
        fitted = generate_white_noise(len(signal), ctx, signal.sample_rate_hz)
    else:
        fitted = fit_noise_to_length(entry, len(signal), ctx)
    return mix_at_snr(signal, fitted, target)
