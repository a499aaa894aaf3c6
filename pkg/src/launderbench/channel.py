"""Post-sensor channel attacks: low-pass filtering, resampling, recompression.

The Butterworth design is done from scratch (analog prototype poles, bilinear
transform with prewarping, second-order sections); filtering runs through
scipy's direct-form-II-transposed cascade with zero initial state.  Rational
resampling pairs a hand-designed Kaiser windowed-sinc low-pass with scipy's
polyphase engine.  MP3 recompression shells out to a user-configurable
transcoder; a deterministic STFT-truncation proxy stands in for it in
hermetic test runs.
"""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .audio import AudioBuffer, read_wav, write_wav
from .errors import FilterDesignError, SampleRateMismatchError, TranscoderError

MP3_BITRATES_KBPS = (16, 64, 128, 192, 256, 320)
RESAMPLE_RATES_HZ = (8000, 11025, 22050, 44100)
TIMEOUT_ENV = "LAUNDERBENCH_TRANSCODER_TIMEOUT"
DEFAULT_TIMEOUT_S = 60.0

# Kaiser prototype: ~80 dB stopband, transition ~21% of the folding band
_KAISER_ATTEN_DB = 80.0
_KAISER_HALF_FACTOR = 24


@dataclass(frozen=True)
class BiquadSection:
    """One second-order section, denominator normalized (a0 = 1)."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def poles(self) -> np.ndarray:
        return np.roots([1.0, self.a1, self.a2])

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))


@dataclass(frozen=True)
class FilterCascade:
    """Ordered second-order sections plus the design they realize."""

    sections: tuple[BiquadSection, ...]
    order: int
    cutoff_hz: float
    sample_rate_hz: int

    def as_sos(self) -> np.ndarray:
        return np.array(
            [[s.b0, s.b1, s.b2, 1.0, s.a1, s.a2] for s in self.sections]
        )

    def is_stable(self) -> bool:
        return all(s.is_stable() for s in self.sections)

    def response_db(self, freqs_hz: np.ndarray) -> np.ndarray:
        """Magnitude response in dB evaluated straight from the coefficients."""
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / self.sample_rate_hz
        z1 = np.exp(-1j * w)
        h = np.ones_like(z1, dtype=np.complex128)
        for s in self.sections:
            h *= (s.b0 + s.b1 * z1 + s.b2 * z1 ** 2) / (1.0 + s.a1 * z1 + s.a2 * z1 ** 2)
        return 20.0 * np.log10(np.abs(h))


def design_butterworth_lowpass(order: int, cutoff_hz: float,
                               sample_rate_hz: int) -> FilterCascade:
    """Digital Butterworth low-pass as unity-DC-gain biquad sections.

    Analog prototype poles are scaled to the prewarped cutoff and mapped by
    the bilinear transform; conjugate pairs become one section each, plus a
    first-order section when the order is odd.
    """
    if order < 1:
        raise FilterDesignError(f"order must be >= 1, got {order}")
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise FilterDesignError(
            f"cutoff {cutoff_hz} Hz must lie strictly inside (0, Nyquist="
            f"{sample_rate_hz / 2} Hz)"
        )

    warped = math.tan(math.pi * cutoff_hz / sample_rate_hz)
    z_poles = []
    for k in range(order):
        theta = math.pi * (2 * k + order + 1) / (2 * order)
        s = complex(math.cos(theta), math.sin(theta)) * warped
        z_poles.append((1 + s) / (1 - s))

    sections = []
    if order % 2:
        real = min(z_poles, key=lambda p: abs(p.imag))
        z_poles.remove(real)
        p = real.real
        g = (1.0 - p) / 2.0
        sections.append(BiquadSection(g, g, 0.0, -p, 0.0))
    for p in sorted(z_poles, key=lambda q: q.imag):
        if p.imag <= 0:
            continue  # conjugate handled with its partner
        a1 = -2.0 * p.real
        a2 = abs(p) ** 2
        g = (1.0 + a1 + a2) / 4.0
        sections.append(BiquadSection(g, 2.0 * g, g, a1, a2))

    cascade = FilterCascade(tuple(sections), order, cutoff_hz, sample_rate_hz)
    if not cascade.is_stable():
        raise FilterDesignError("designed cascade is unstable")  # pragma: no cover
    return cascade


def apply_filter(cascade: FilterCascade, audio: AudioBuffer) -> AudioBuffer:
    """Run the cascade over the audio (DF2T, zero initial state)."""
    if audio.sample_rate_hz != cascade.sample_rate_hz:
        raise SampleRateMismatchError(
            f"audio at {audio.sample_rate_hz} Hz vs design at {cascade.sample_rate_hz} Hz"
        )
    out = sps.sosfilt(cascade.as_sos(), audio.samples)
    return AudioBuffer(out, audio.sample_rate_hz)


@dataclass(frozen=True)
class ResampleRatio:
    """Exact rational rate change up/down in lowest terms."""

    up: int
    down: int

    def __post_init__(self):
        if self.up < 1 or self.down < 1:
            raise ValueError("up and down must be positive")
        if math.gcd(self.up, self.down) != 1:
            raise ValueError(f"{self.up}/{self.down} is not in lowest terms")


def reduce_ratio(source_rate: int, target_rate: int) -> ResampleRatio:
    """target = source * up / down with gcd(up, down) = 1."""
    if source_rate <= 0 or target_rate <= 0:
        raise ValueError("rates must be positive")
    g = math.gcd(source_rate, target_rate)
    return ResampleRatio(target_rate // g, source_rate // g)


def _kaiser_sinc(up: int, down: int) -> np.ndarray:
    """Anti-alias/anti-image prototype at the upsampled rate.

    Cutoff sits at min(pi/up, pi/down); the Kaiser beta targets the
    configured stopband attenuation.
    """
    m = max(up, down)
    half = _KAISER_HALF_FACTOR * m
    n = np.arange(-half, half + 1)
    fc = 1.0 / (2.0 * m)  # cycles per sample
    beta = 0.1102 * (_KAISER_ATTEN_DB - 8.7)
    return 2.0 * fc * np.sinc(2.0 * fc * n) * np.kaiser(2 * half + 1, beta)


def resample(audio: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Polyphase windowed-sinc resampling to the target rate.

    Identity rate change is a bit-exact pass-through.  Output length is
    ceil(len * up / down).
    """
    ratio = reduce_ratio(audio.sample_rate_hz, target_rate)
    if ratio.up == ratio.down:
        return AudioBuffer(audio.samples.copy(), target_rate)
    h = _kaiser_sinc(ratio.up, ratio.down)
    out = sps.resample_poly(audio.samples, ratio.up, ratio.down, window=h)
    return AudioBuffer(out, target_rate)


@dataclass(frozen=True)
class TranscoderTemplate:
    """Shell command templates for the encode/decode round trip.

    encode_command uses {in}, {out}, {bitrate_kbps}; decode_command uses
    {in}, {out} and may use {rate} to pin the decoded sample rate.  Each
    placeholder must appear exactly once.
    """

    encode_command: str
    decode_command: str

    def __post_init__(self):
        for name, tpl, required in (
            ("encode_command", self.encode_command, ("{in}", "{out}", "{bitrate_kbps}")),
            ("decode_command", self.decode_command, ("{in}", "{out}")),
        ):
            for ph in required:
                if tpl.count(ph) != 1:
                    raise ValueError(f"{name} must contain {ph} exactly once")
        if self.decode_command.count("{rate}") > 1:
            raise ValueError("decode_command may contain {rate} at most once")


def ffmpeg_template() -> TranscoderTemplate:
    """Default templates targeting the ffmpeg CLI with the LAME encoder."""
    return TranscoderTemplate(
        encode_command="ffmpeg -y -loglevel error -i {in} -codec:a libmp3lame "
                       "-b:a {bitrate_kbps}k {out}",
        decode_command="ffmpeg -y -loglevel error -i {in} -ar {rate} {out}",
    )


def _run_command(cmd: str, timeout_s: float) -> None:
    argv = shlex.split(cmd)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout_s)
    except FileNotFoundError:
        raise TranscoderError(f"transcoder command not found: {argv[0]!r}") from None
    except subprocess.TimeoutExpired:
        raise TranscoderError(f"transcoder timed out after {timeout_s}s: {cmd}") from None
    if proc.returncode != 0:
        raise TranscoderError(
            f"transcoder exited with status {proc.returncode}: {cmd}",
            stdout=proc.stdout, stderr=proc.stderr,
        )


def recompress(audio: AudioBuffer, bitrate_kbps: int, tpl: TranscoderTemplate,
               workdir, tag: str | None = None) -> AudioBuffer:
    """Lossy round trip through the external transcoder.

    Writes a temp WAV, encodes at the given bitrate, decodes back to WAV,
    and reads the result.  The decoded rate must equal the input rate.
    Temp names embed the caller's tag (or a fresh UUID) so concurrent calls
    never collide; temp files are removed on all paths.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    stem = tag if tag else uuid.uuid4().hex
    src = workdir / f"{stem}_src.wav"
    enc = workdir / f"{stem}_enc.mp3"
    dec = workdir / f"{stem}_dec.wav"
    timeout_s = float(os.environ.get(TIMEOUT_ENV, DEFAULT_TIMEOUT_S))
    try:
        write_wav(audio, src, "pcm16")
        _run_command(
            tpl.encode_command.replace("{in}", str(src)).replace("{out}", str(enc))
            .replace("{bitrate_kbps}", str(bitrate_kbps)),
            timeout_s,
        )
        _run_command(
            tpl.decode_command.replace("{in}", str(enc)).replace("{out}", str(dec))
            .replace("{rate}", str(audio.sample_rate_hz)),
            timeout_s,
        )
        try:
            out = read_wav(dec)
        except (FileNotFoundError, OSError) as exc:
            raise TranscoderError(f"decoded output unreadable: {exc}") from None
        if out.sample_rate_hz != audio.sample_rate_hz:
            raise TranscoderError(
                f"decoded rate {out.sample_rate_hz} Hz != input rate "
                f"{audio.sample_rate_hz} Hz; pin it via {{rate}} in decode_command"
            )
        return out
    finally:
        for p in (src, enc, dec):
            p.unlink(missing_ok=True)


def lossy_proxy(audio: AudioBuffer, bitrate_kbps: int) -> AudioBuffer:
    """Deterministic stand-in for MP3 recompression (hermetic test runs).

    STFT-domain truncation: keep the lowest clamp(bitrate/320, 0.15, 1.0)
    fraction of bins and quantize magnitudes, with quantizer depth growing
    with bitrate.  Not a codec; never used for benchmark-grade runs.
    """
    if bitrate_kbps not in MP3_BITRATES_KBPS:
        raise ValueError(f"bitrate {bitrate_kbps} not in grid {MP3_BITRATES_KBPS}")
    frac = min(max(bitrate_kbps / 320.0, 0.15), 1.0)
    levels = 2 ** (4 + round(8 * bitrate_kbps / 320))

    n_fft = 512
    hop = n_fft // 2
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)  # periodic hann
    x = audio.samples
    pad = np.concatenate([np.zeros(hop), x, np.zeros(n_fft)])
    n_frames = 1 + (pad.size - n_fft) // hop
    keep = int(round(frac * (n_fft // 2 + 1)))
    out = np.zeros(pad.size)
    for t in range(n_frames):
        seg = pad[t * hop:t * hop + n_fft] * win
        spec = np.fft.rfft(seg)
        spec[keep:] = 0.0
        mag = np.abs(spec)
        peak = mag.max()
        if peak > 0:
            mag = np.round(mag / peak * levels) / levels * peak
            spec = mag * np.exp(1j * np.angle(spec))
        out[t * hop:t * hop + n_fft] += np.fft.irfft(spec, n_fft)
    return AudioBuffer(out[hop:hop + x.size], audio.sample_rate_hz)
