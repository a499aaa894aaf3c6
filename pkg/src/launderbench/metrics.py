"""Protocol and score parsing, EER, DET points, and the results grid.

EER uses the convention: accept as bonafide iff score >= threshold; sweep
all distinct scores; P_miss is the bonafide fraction below the threshold
and P_fa the spoof fraction at or above it.  The reported EER is the value
where P_miss - P_fa changes sign, linearly interpolated between the two
adjacent operating points (not a ROC convex hull).

The results grid renders one row per (attack, parameter) in a fixed order
with per-family average rows that are always recomputed from the parameter
rows; an average supplied by an ingested table is only compared against the
recomputation and flagged when they disagree.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError, ScoringError

KEYS = ("bonafide", "spoof")
ABSENT = "—"  # em dash cell marker for missing EERs


@dataclass(frozen=True)
class TrialEntry:
    speaker_id: str
    utt_id: str
    attack_system_id: str
    key: str


@dataclass
class TrialSet:
    """Protocol trials with bonafide/spoof keys, utterance ids unique."""

    entries: list[TrialEntry]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.utt_id in seen:
                raise ProtocolError(f"duplicate utt_id {e.utt_id!r}")
            seen.add(e.utt_id)

    def key_of(self) -> dict[str, str]:
        return {e.utt_id: e.key for e in self.entries}

    def count(self, key: str) -> int:
        return sum(1 for e in self.entries if e.key == key)


@dataclass
class ScoreSet:
    """utt_id -> score (higher = more bonafide) for one system/condition."""

    entries: dict[str, float]
    system_name: str = ""
    condition_tag: str = ""


def parse_protocol(path) -> TrialSet:
    """Read 5-field protocol lines: SPEAKER UTT - SYSTEM KEY.

    "-" placeholders are tolerated in fields 3 and 4; the key must be
    bonafide or spoof.  Errors carry the 1-based line number.
    """
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 5:
                raise ProtocolError(
                    f"{path}:{lineno}: expected 5 fields, got {len(fields)}"
                )
            speaker, utt, _, system, key = fields
            if key not in KEYS:
                raise ProtocolError(
                    f"{path}:{lineno}: key must be bonafide or spoof, got {key!r}"
                )
            entries.append(TrialEntry(speaker, utt, system, key))
    try:
        return TrialSet(entries)
    except ProtocolError as exc:
        raise ProtocolError(f"{path}: {exc}") from None


def parse_scores(path, system_name: str = "", condition_tag: str = "") -> ScoreSet:
    """Read score lines: first field utt_id, last field the score."""
    entries: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) < 2:
                raise ProtocolError(f"{path}:{lineno}: expected 'utt_id score'")
            utt = fields[0]
            try:
                score = float(fields[-1])
            except ValueError:
                raise ProtocolError(
                    f"{path}:{lineno}: non-numeric score {fields[-1]!r}"
                ) from None
            if not np.isfinite(score):
                raise ProtocolError(f"{path}:{lineno}: non-finite score")
            if utt in entries:
                raise ProtocolError(f"{path}:{lineno}: duplicate utt_id {utt!r}")
            entries[utt] = score
    return ScoreSet(entries, system_name, condition_tag)


def _rates(bonafide: np.ndarray, spoof: np.ndarray, thresholds: np.ndarray):
    """P_miss and P_fa at each threshold under the >= acceptance rule."""
    sb = np.sort(bonafide)
    ss = np.sort(spoof)
    p_miss = np.searchsorted(sb, thresholds, side="left") / sb.size
    p_fa = 1.0 - np.searchsorted(ss, thresholds, side="left") / ss.size
    return p_miss, p_fa


def compute_eer(bonafide_scores, spoof_scores) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Returns (eer in [0, 1], threshold).  Errors when either class is empty.
    """
    bona = np.asarray(bonafide_scores, dtype=np.float64)
    spoof = np.asarray(spoof_scores, dtype=np.float64)
    if bona.size == 0 or spoof.size == 0:
        raise ScoringError("no trials: EER needs at least one score per class")

    thresholds = np.unique(np.concatenate([bona, spoof]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)  # all-reject point
    p_miss, p_fa = _rates(bona, spoof, thresholds)
    diff = p_miss - p_fa  # non-decreasing in the threshold
    i = int(np.argmax(diff >= 0.0))
    if diff[i] == 0.0 or i == 0:
        return float(p_miss[i]), float(thresholds[i])
    dm = p_miss[i] - p_miss[i - 1]
    df = p_fa[i] - p_fa[i - 1]
    t = (p_fa[i - 1] - p_miss[i - 1]) / (dm - df)
    eer = p_miss[i - 1] + t * dm
    thr = thresholds[i - 1] + t * (thresholds[i] - thresholds[i - 1])
    return float(eer), float(thr)


def det_points(bonafide_scores, spoof_scores) -> list[tuple[float, float]]:
    """Operating points (P_fa, P_miss) over all thresholds, deduplicated.

    P_fa is non-increasing and P_miss non-decreasing along the sweep.
    """
    bona = np.asarray(bonafide_scores, dtype=np.float64)
    spoof = np.asarray(spoof_scores, dtype=np.float64)
    if bona.size == 0 or spoof.size == 0:
        raise ScoringError("no trials: DET needs at least one score per class")
    thresholds = np.unique(np.concatenate([bona, spoof]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    p_miss, p_fa = _rates(bona, spoof, thresholds)
    points = []
    for fa, miss in zip(p_fa, p_miss):
        pt = (float(fa), float(miss))
        if not points or points[-1] != pt:
            points.append(pt)
    return points


@dataclass
class GridRow:
    """One line of the results grid; eers maps system name -> EER in [0,1]."""

    attack: str
    parameter: str
    eers: dict[str, float | None]
    is_avg: bool = False


@dataclass
class ResultsGrid:
    """Attack x system EER grid in presentation order."""

    systems: list[str]
    rows: list[GridRow]
    supplied_avgs: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.rows:
            raise ScoringError("results grid must have at least one row")


def recompute_averages(grid: ResultsGrid) -> None:
    """Fill avg rows from their parameter rows (never from input values)."""
    for row in grid.rows:
        if not row.is_avg:
            continue
        members = [r for r in grid.rows if r.attack == row.attack and not r.is_avg]
        for system in grid.systems:
            vals = [r.eers.get(system) for r in members]
            if vals and all(v is not None for v in vals):
                row.eers[system] = float(np.mean([float(v) for v in vals]))
            else:
                row.eers[system] = None


def _avg_flags(grid: ResultsGrid) -> list[str]:
    notes = []
    for row in grid.rows:
        if not row.is_avg:
            continue
        for system in grid.systems:
            supplied = grid.supplied_avgs.get((row.attack, system))
            value = row.eers.get(system)
            if supplied is None or value is None:
                continue
            if abs(supplied - value * 100.0) > 5e-3:  # both in percent, 2dp grid
                notes.append(
                    f"{row.attack} / {system}: supplied avg {supplied:.2f} "
                    f"differs from recomputed {value * 100.0:.2f}"
                )
    return notes


def _cell(value: float | None) -> str:
    return ABSENT if value is None else f"{value * 100.0:.2f}"


def render_report(grid: ResultsGrid, fmt: str = "markdown") -> str:
    """Render the grid as markdown or CSV; EERs in percent, 2 decimals.

    Average rows are recomputed before rendering.  Cells whose supplied
    average disagrees with the recomputation are listed in a footer.
    """
    recompute_averages(grid)
    notes = _avg_flags(grid)
    if fmt == "markdown":
        out = io.StringIO()
        header = ["Attack", "Parameter"] + grid.systems
        out.write("| " + " | ".join(header) + " |\n")
        out.write("|" + "|".join(["---"] * len(header)) + "|\n")
        for row in grid.rows:
            cells = [row.attack, row.parameter]
            cells += [_cell(row.eers.get(s)) for s in grid.systems]
            out.write("| " + " | ".join(cells) + " |\n")
        for note in notes:
            out.write(f"\nNote: {note}\n")
        return out.getvalue()
    if fmt == "csv":
        out = io.StringIO()
        out.write(",".join(["attack", "parameter"] + grid.systems) + "\n")
        for row in grid.rows:
            cells = [row.attack, row.parameter]
            cells += [_cell(row.eers.get(s)) for s in grid.systems]
            out.write(",".join(cells) + "\n")
        for note in notes:
            out.write(f"# note: {note}\n")
        return out.getvalue()
    raise ValueError(f"format must be markdown or csv, got {fmt!r}")


def parse_report_csv(text: str) -> ResultsGrid:
    """Read back a CSV report; avg-row values become supplied averages."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ScoringError("empty report")
    header = lines[0].split(",")
    if header[:2] != ["attack", "parameter"]:
        raise ScoringError("report header must start with attack,parameter")
    systems = header[2:]
    rows = []
    supplied: dict[tuple[str, str], float] = {}
    for ln in lines[1:]:
        cells = ln.split(",")
        attack, parameter = cells[0], cells[1]
        is_avg = parameter == "avg"
        eers: dict[str, float | None] = {}
        for system, cell in zip(systems, cells[2:]):
            value = None if cell == ABSENT else float(cell) / 100.0
            eers[system] = value
            if is_avg and value is not None:
                supplied[(attack, system)] = float(cell)
        rows.append(GridRow(attack, parameter, eers, is_avg))
    return ResultsGrid(systems, rows, supplied)
