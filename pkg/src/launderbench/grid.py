"""Attack grid configuration, laundered-corpus accounting, and job dispatch.

An attack spec is one (kind, parameter) cell of the laundering grid; its tag
is a pure function of both and parses back bijectively, so a laundered file
name <utt>__<tag>.wav fully identifies its provenance.  The benchmark grid
is 29 specs: 3 reverberation times, 5 noises x 3 SNRs, 6 MP3 bitrates,
4 resampling rates, and one low-pass cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import yaml

from .audio import AudioBuffer, SeedContext
from .channel import (
    MP3_BITRATES_KBPS,
    RESAMPLE_RATES_HZ,
    TranscoderTemplate,
    apply_filter,
    design_butterworth_lowpass,
    ffmpeg_template,
    lossy_proxy,
    recompress,
    resample,
)
from .errors import ConfigError
from .metrics import TrialSet
from .noise import NOISE_NAMES, NoiseBank, SnrTarget, apply_noise_attack
from .reverb import RoomImpulseResponse, apply_reverb, default_room, simulate_rir

REVERBERATION = "reverberation"
ADDITIVE_NOISE = "additive_noise"
RECOMPRESSION = "recompression"
RESAMPLING = "resampling"
LOW_PASS = "low_pass"

ATTACK_KINDS = (REVERBERATION, ADDITIVE_NOISE, RECOMPRESSION, RESAMPLING, LOW_PASS)
RT60_GRID_S = (0.3, 0.6, 0.9)
SNR_GRID_DB = (0, 10, 20)
DEFAULT_LPF_CUTOFF_HZ = 7000
LAUNDERED_SEP = "__"


@dataclass(frozen=True)
class AttackSpec:
    """One laundering attack with its parameter and canonical tag."""

    kind: str
    parameter: object  # rt60 s | (noise, snr dB) | kbps | Hz | cutoff Hz

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        self.tag  # validates the parameter shape

    @property
    def tag(self) -> str:
        if self.kind == REVERBERATION:
            rt60 = float(self.parameter)
            if rt60 <= 0:
                raise ConfigError(f"rt60 must be positive, got {rt60}")
            return "rt_" + f"{rt60:g}".replace(".", "_")
        if self.kind == ADDITIVE_NOISE:
            name, snr = self.parameter
            if name not in NOISE_NAMES:
                raise ConfigError(f"unknown noise name {name!r}")
            return f"{name}_{float(snr):g}"
        if self.kind == RECOMPRESSION:
            kbps = int(self.parameter)
            if kbps not in MP3_BITRATES_KBPS:
                raise ConfigError(f"bitrate {kbps} not in {MP3_BITRATES_KBPS}")
            return f"mp3_{kbps}"
        if self.kind == RESAMPLING:
            rate = int(self.parameter)
            if rate <= 0:
                raise ConfigError(f"target rate must be positive, got {rate}")
            return f"rs_{rate}"
        cutoff = int(self.parameter)
        if cutoff <= 0:
            raise ConfigError(f"cutoff must be positive, got {cutoff}")
        return f"lpf_{cutoff}"


def parse_tag(tag: str) -> AttackSpec:
    """Invert AttackSpec.tag."""
    if tag.startswith("rt_"):
        return AttackSpec(REVERBERATION, float(tag[3:].replace("_", ".")))
    if tag.startswith("mp3_"):
        return AttackSpec(RECOMPRESSION, int(tag[4:]))
    if tag.startswith("rs_"):
        return AttackSpec(RESAMPLING, int(tag[3:]))
    if tag.startswith("lpf_"):
        return AttackSpec(LOW_PASS, int(tag[4:]))
    name, _, snr = tag.rpartition("_")
    if name in NOISE_NAMES:
        return AttackSpec(ADDITIVE_NOISE, (name, float(snr)))
    raise ConfigError(f"unparseable attack tag {tag!r}")


def split_laundered_id(utt_id: str) -> tuple[str, str | None]:
    """(original utt, tag or None) from a possibly-laundered utterance id."""
    if LAUNDERED_SEP in utt_id:
        orig, _, tag = utt_id.rpartition(LAUNDERED_SEP)
        return orig, tag
    return utt_id, None


def benchmark_grid_specs(lpf_cutoff_hz: int = DEFAULT_LPF_CUTOFF_HZ) -> list[AttackSpec]:
    """The full 29-attack grid in presentation order."""
    specs = [AttackSpec(REVERBERATION, rt) for rt in RT60_GRID_S]
    for name in ("babble", "volvo", "white", "cafe", "street"):
        specs += [AttackSpec(ADDITIVE_NOISE, (name, snr)) for snr in SNR_GRID_DB]
    specs += [AttackSpec(RECOMPRESSION, kbps) for kbps in MP3_BITRATES_KBPS]
    specs += [AttackSpec(RESAMPLING, rate) for rate in RESAMPLE_RATES_HZ]
    specs.append(AttackSpec(LOW_PASS, lpf_cutoff_hz))
    return specs


@dataclass
class AttackGrid:
    """Validated grid: specs plus the shared resources they need."""

    specs: list[AttackSpec]
    seed: int = 0
    noise_bank_paths: dict[str, str] = field(default_factory=dict)
    transcoder: TranscoderTemplate | None = None
    recompression_mode: str = "transcoder"  # or "proxy" for hermetic runs

    def __post_init__(self):
        tags = [s.tag for s in self.specs]
        if len(set(tags)) != len(tags):
            raise ConfigError("duplicate attack tags in grid")
        if self.recompression_mode not in ("transcoder", "proxy"):
            raise ConfigError(
                f"recompression_mode must be transcoder or proxy, "
                f"got {self.recompression_mode!r}"
            )
        needed = {
            name for s in self.specs if s.kind == ADDITIVE_NOISE
            for name in [s.parameter[0]]
        }
        missing = sorted(
            n for n in needed if n != "white" and n not in self.noise_bank_paths
        )
        if missing:
            raise ConfigError(
                "grid includes noise attacks but the noise bank lacks files for: "
                + ", ".join(missing)
            )


def load_grid_config(path) -> AttackGrid:
    """Parse the YAML grid config.

    Schema (all top-level keys optional unless noted):
      full-grid: true          expands to the full 29-spec grid
      attacks: [...]            explicit spec list (kind + parameter fields)
      seed: <int>               global seed, default 0
      lpf_cutoff_hz: <int>      default 7000
      noise_bank: {name: path}  files for babble/volvo/cafe/street
      transcoder: {encode: ..., decode: ...}
      recompression_mode: transcoder | proxy
    """
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")

    known = {"full-grid", "attacks", "seed", "lpf_cutoff_hz", "noise_bank",
             "transcoder", "recompression_mode"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{path}: unknown config key {key!r}")

    cutoff = raw.get("lpf_cutoff_hz", DEFAULT_LPF_CUTOFF_HZ)
    if not isinstance(cutoff, int) or cutoff <= 0:
        raise ConfigError(f"{path}: lpf_cutoff_hz: must be a positive integer")

    specs: list[AttackSpec] = []
    if raw.get("full-grid", False):
        specs = benchmark_grid_specs(cutoff)
    for i, item in enumerate(raw.get("attacks", []) or []):
        where = f"{path}: attacks[{i}]"
        if not isinstance(item, dict) or "kind" not in item:
            raise ConfigError(f"{where}: each attack needs a 'kind'")
        kind = item["kind"]
        try:
            if kind == REVERBERATION:
                specs.append(AttackSpec(kind, float(item["rt60_s"])))
            elif kind == ADDITIVE_NOISE:
                specs.append(AttackSpec(kind, (item["noise"], float(item["snr_db"]))))
            elif kind == RECOMPRESSION:
                specs.append(AttackSpec(kind, int(item["bitrate_kbps"])))
            elif kind == RESAMPLING:
                specs.append(AttackSpec(kind, int(item["target_rate_hz"])))
            elif kind == LOW_PASS:
                specs.append(AttackSpec(kind, int(item.get("cutoff_hz", cutoff))))
            else:
                raise ConfigError(f"{where}.kind: unknown attack kind {kind!r}")
        except KeyError as exc:
            raise ConfigError(f"{where}: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if not specs:
        raise ConfigError(f"{path}: no attacks configured (set full-grid or attacks)")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"{path}: seed: must be an integer")

    bank = raw.get("noise_bank", {}) or {}
    if not isinstance(bank, dict):
        raise ConfigError(f"{path}: noise_bank: must be a mapping of name to path")

    transcoder = None
    if "transcoder" in raw:
        t = raw["transcoder"]
        if not isinstance(t, dict) or "encode" not in t or "decode" not in t:
            raise ConfigError(f"{path}: transcoder: needs encode and decode commands")
        try:
            transcoder = TranscoderTemplate(t["encode"], t["decode"])
        except ValueError as exc:
            raise ConfigError(f"{path}: transcoder: {exc}") from None

    mode = raw.get("recompression_mode", "transcoder")
    try:
        return AttackGrid(specs, seed, {str(k): str(v) for k, v in bank.items()},
                          transcoder, mode)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class ManifestRow:
    orig_utt_id: str
    tag: str
    laundered_utt_id: str
    key: str


@dataclass
class LaunderedManifest:
    """Cross product of trials and attack specs, stored factored.

    Rows are generated on demand; counts come straight from the factorization
    so corpus-scale accounting never materializes millions of rows.
    """

    trials: TrialSet
    specs: list[AttackSpec]

    def __len__(self) -> int:
        return len(self.trials.entries) * len(self.specs)

    def rows(self) -> Iterator[ManifestRow]:
        for entry in self.trials.entries:
            for spec in self.specs:
                yield ManifestRow(
                    entry.utt_id, spec.tag,
                    entry.utt_id + LAUNDERED_SEP + spec.tag, entry.key,
                )

    def family_counts(self) -> dict[str, dict[str, int]]:
        """Per attack family: laundered utterance counts by key."""
        n_bona = self.trials.count("bonafide")
        n_spoof = self.trials.count("spoof")
        out: dict[str, dict[str, int]] = {}
        for spec in self.specs:
            fam = out.setdefault(spec.kind, {"bonafide": 0, "spoof": 0, "specs": 0})
            fam["bonafide"] += n_bona
            fam["spoof"] += n_spoof
            fam["specs"] += 1
        return out

    def accounting_report(self) -> str:
        """Human-readable count table with the additive-noise copy-count note."""
        n_bona = self.trials.count("bonafide")
        n_spoof = self.trials.count("spoof")
        lines = [
            f"trials: {n_bona} bonafide / {n_spoof} spoof",
            f"attack specs: {len(self.specs)}",
        ]
        for fam, counts in self.family_counts().items():
            lines.append(
                f"{fam}: {counts['specs']} copies per trial -> "
                f"{counts['bonafide']} bonafide / {counts['spoof']} spoof"
            )
        n_noise = sum(1 for s in self.specs if s.kind == ADDITIVE_NOISE)
        if n_noise == 15:
            lines.append(
                "note: the additive-noise family is 15 copies per trial "
                "(5 noises x 3 SNR levels) giving "
                f"{15 * n_bona} bonafide / {15 * n_spoof} spoof; published "
                "statistics for this corpus also circulate with 18 copies per "
                f"trial ({18 * n_bona} bonafide / {18 * n_spoof} spoof), which "
                "does not factor as 5 x 3. This grid emits 15 and reports the "
                "discrepancy instead of reconciling it."
            )
        return "\n".join(lines)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("orig_utt_id\ttag\tlaundered_utt_id\tkey\n")
            for row in self.rows():
                fh.write(f"{row.orig_utt_id}\t{row.tag}\t{row.laundered_utt_id}\t{row.key}\n")


def expand_grid(grid: AttackGrid, trials: TrialSet) -> LaunderedManifest:
    """Cross every trial with every attack spec."""
    return LaunderedManifest(trials, list(grid.specs))


@dataclass
class SharedAttackState:
    """Read-only caches shared by all laundering jobs of a run."""

    rirs: dict[str, RoomImpulseResponse] = field(default_factory=dict)
    noise_bank: NoiseBank | None = None
    filters: dict[str, object] = field(default_factory=dict)
    transcoder: TranscoderTemplate | None = None
    recompression_mode: str = "transcoder"
    workdir: str = "."

    @classmethod
    def for_grid(cls, grid: AttackGrid, sample_rate_hz: int,
                 workdir: str = ".") -> "SharedAttackState":
        """Warm the RIR/filter caches and load the noise bank once."""
        state = cls(
            transcoder=grid.transcoder
            if grid.transcoder or grid.recompression_mode == "proxy"
            else ffmpeg_template(),
            recompression_mode=grid.recompression_mode,
            workdir=workdir,
        )
        room = default_room()
        for spec in grid.specs:
            if spec.kind == REVERBERATION and spec.tag not in state.rirs:
                state.rirs[spec.tag] = simulate_rir(
                    room, float(spec.parameter), sample_rate_hz
                )
            elif spec.kind == LOW_PASS and spec.tag not in state.filters:
                state.filters[spec.tag] = design_butterworth_lowpass(
                    5, float(spec.parameter), sample_rate_hz
                )
        if any(s.kind == ADDITIVE_NOISE for s in grid.specs):
            state.noise_bank = NoiseBank.from_manifest(
                grid.noise_bank_paths, sample_rate_hz
            )
        return state


def run_launder_job(audio: AudioBuffer, spec: AttackSpec, ctx: SeedContext,
                    shared: SharedAttackState) -> AudioBuffer:
    """Apply one attack spec to one utterance, deterministically under ctx."""
    if spec.kind == REVERBERATION:
        return apply_reverb(audio, shared.rirs[spec.tag])
    if spec.kind == ADDITIVE_NOISE:
        name, snr = spec.parameter
        return apply_noise_attack(audio, shared.noise_bank, name,
                                  SnrTarget(float(snr)), ctx)
    if spec.kind == RECOMPRESSION:
        if shared.recompression_mode == "proxy":
            return lossy_proxy(audio, int(spec.parameter))
        return recompress(audio, int(spec.parameter), shared.transcoder,
                          shared.workdir, tag=f"{ctx.utt_id}{LAUNDERED_SEP}{spec.tag}")
    if spec.kind == RESAMPLING:
        return resample(audio, int(spec.parameter))
    return apply_filter(shared.filters[spec.tag], audio)
