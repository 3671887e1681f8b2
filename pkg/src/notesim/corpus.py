"""Corpus scanning and SOL-style filename metadata.

Filename grammar: ``Instr[+Mute]-technique-pitch-dynamics[-variant]`` where
the technique field may itself contain hyphens. Parsing therefore anchors on
the dynamics vocabulary scanning from the right: the rightmost dynamics
token splits the stem into (instrument, technique..., pitch) on its left and
an optional variant on its right.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

# Seeded from the 16 instruments of the SOL library, plus the two synthetic
# pseudo-instruments this package generates. Unknown codes pass through.
INSTRUMENT_CODES = {
    "Acc": "accordion",
    "ASax": "alto-saxophone",
    "Bn": "bassoon",
    "BbCl": "clarinet-in-b-flat",
    "Cb": "contrabass",
    "Fl": "flute",
    "Gtr": "guitar",
    "Hp": "harp",
    "Hn": "horn",
    "Ob": "oboe",
    "TpC": "trumpet-in-c",
    "Tbn": "trombone",
    "BTb": "bass-tuba",
    "Va": "viola",
    "Vc": "violoncello",
    "Vn": "violin",
    "SyA": "synthetic-bright",
    "SyB": "synthetic-mellow",
}

MUTE_CODES = {
    "S": "straight-or-sordina",
    "H": "harmon",
    "C": "cup",
    "W": "wah",
    "P": "sordina-piombo",
    "voc": "vocalized",
}

TECHNIQUE_CODES = {
    "ord": "ordinario",
    "trem": "tremolo",
    "vib": "vibrato",
    "flatt": "flatterzunge",
    "pont": "sul-ponticello",
    "tasto": "sul-tasto",
    "pizz": "pizzicato",
    "sfz": "sforzando",
    "stacc": "staccato",
    "gliss": "glissando",
    "harm": "harmonic-fingering",
    "brassy": "brassy",
    "mult": "multiphonics",
}
_TECHNIQUE_NAMES = {name: code for code, name in TECHNIQUE_CODES.items()}

DYNAMICS_VOCAB = ("pp", "p", "mp", "mf", "f", "ff", "fp", "cresc", "decresc")

_NOTE_OFFSETS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_SHARP_NAMES = ["C", "Csh", "D", "Dsh", "E", "F", "Fsh", "G", "Gsh", "A", "Ash", "B"]
_PITCH_RE = re.compile(r"^([A-G])(sh|#|b)?(-?\d+)$")


class FilenameError(ValueError):
    """Stem does not match the Instr[+Mute]-technique-pitch-dynamics grammar."""


class CorpusError(ValueError):
    """Corpus directory unusable (empty, unreadable)."""


def pitch_to_midi(pitch: str) -> int:
    """Scientific pitch name to MIDI number; C4 = 60, supports 'sh'/'#'/'b'."""
    m = _PITCH_RE.match(pitch)
    if not m:
        raise ValueError(f"unparseable pitch {pitch!r}")
    letter, accidental, octave = m.groups()
    midi = (int(octave) + 1) * 12 + _NOTE_OFFSETS[letter]
    if accidental in ("sh", "#"):
        midi += 1
    elif accidental == "b":
        midi -= 1
    if not 0 <= midi <= 127:
        raise ValueError(f"pitch {pitch!r} outside MIDI range")
    return midi


def midi_to_pitch(midi: int) -> str:
    if not 0 <= midi <= 127:
        raise ValueError("MIDI number outside [0, 127]")
    return f"{_SHARP_NAMES[midi % 12]}{midi // 12 - 1}"


@dataclass(frozen=True)
class NoteMetadata:
    """Label namespaces of one note: instrument / mute / technique / pitch /
    dynamics, plus an optional string-or-variant tag."""

    instrument_code: str
    technique: str
    dynamics: str
    instrument_name: str = ""
    mute_code: str | None = None
    mute_name: str | None = None
    pitch: str | None = None
    midi: int | None = None
    variant: str | None = None
    unknown_codes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.instrument_code or not self.technique:
            raise ValueError("instrument and technique must be non-empty")
        if self.midi is not None and not 0 <= self.midi <= 127:
            raise ValueError("MIDI number outside [0, 127]")

    def label(self, namespace: str) -> str:
        """Class label under a namespace; mutes are never discriminative."""
        if namespace == "instrument":
            return self.instrument_code
        if namespace == "technique":
            return self.technique
        raise ValueError(f"unknown namespace {namespace!r}")

    def to_dict(self) -> dict:
        d = {
            "instrument_code": self.instrument_code,
            "instrument_name": self.instrument_name,
            "technique": self.technique,
            "dynamics": self.dynamics,
        }
        if self.mute_code:
            d["mute_code"] = self.mute_code
            d["mute_name"] = self.mute_name
        if self.pitch:
            d["pitch"] = self.pitch
            d["midi"] = self.midi
        if self.variant:
            d["variant"] = self.variant
        if self.unknown_codes:
            d["unknown_codes"] = list(self.unknown_codes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoteMetadata":
        return cls(
            instrument_code=d["instrument_code"],
            instrument_name=d.get("instrument_name", ""),
            technique=d["technique"],
            dynamics=d["dynamics"],
            mute_code=d.get("mute_code"),
            mute_name=d.get("mute_name"),
            pitch=d.get("pitch"),
            midi=d.get("midi"),
            variant=d.get("variant"),
            unknown_codes=tuple(d.get("unknown_codes", ())),
        )


def metadata_for_synth_note(spec) -> NoteMetadata:
    """NoteMetadata for a synthesized note, pitch snapped to the nearest MIDI."""
    import math

    midi = int(round(69 + 12 * math.log2(spec.carrier_freq / 440.0)))
    midi = min(max(midi, 0), 127)
    return NoteMetadata(
        instrument_code=spec.instrument,
        instrument_name=INSTRUMENT_CODES.get(spec.instrument, spec.instrument),
        technique=spec.label,
        dynamics=spec.dynamics,
        pitch=midi_to_pitch(midi),
        midi=midi,
    )


def parse_filename(stem: str) -> NoteMetadata:
    """Parse a SOL-style stem, e.g. 'Vn-ord-G4-mf-4c' or 'TpC+S-flatt-G4-mf'.

    Unknown instrument or mute codes are preserved verbatim and flagged in
    metadata.unknown_codes rather than rejected.
    """
    tokens = stem.split("-")
    if len(tokens) < 3:
        raise FilenameError(f"{stem!r}: fewer than 3 fields")

    dyn_idx = None
    for i in range(len(tokens) - 1, 1, -1):
        if tokens[i] in DYNAMICS_VOCAB:
            dyn_idx = i
            break
    if dyn_idx is None or dyn_idx < 2:
        raise FilenameError(f"{stem!r}: no dynamics token found")

    head = tokens[0]
    if "+" in head:
        instrument_code, mute_code = head.split("+", 1)
    else:
        instrument_code, mute_code = head, None
    pitch_token = tokens[dyn_idx - 1]
    technique_tokens = tokens[1:dyn_idx - 1]
    if not technique_tokens:
        raise FilenameError(f"{stem!r}: missing technique field")
    variant = "-".join(tokens[dyn_idx + 1:]) or None

    technique_code = "-".join(technique_tokens)
    technique = TECHNIQUE_CODES.get(technique_code, technique_code)

    unknown = []
    if instrument_code not in INSTRUMENT_CODES:
        unknown.append(instrument_code)
    if mute_code is not None and mute_code not in MUTE_CODES:
        unknown.append(mute_code)

    try:
        midi = pitch_to_midi(pitch_token)
    except ValueError as exc:
        raise FilenameError(f"{stem!r}: bad pitch field: {exc}") from exc

    return NoteMetadata(
        instrument_code=instrument_code,
        instrument_name=INSTRUMENT_CODES.get(instrument_code, instrument_code),
        technique=technique,
        dynamics=tokens[dyn_idx],
        mute_code=mute_code,
        mute_name=MUTE_CODES.get(mute_code, mute_code) if mute_code else None,
        pitch=pitch_token,
        midi=midi,
        variant=variant,
        unknown_codes=tuple(unknown),
    )


def render_filename(meta: NoteMetadata) -> str:
    """Inverse of parse_filename for well-formed metadata."""
    head = meta.instrument_code
    if meta.mute_code:
        head += f"+{meta.mute_code}"
    technique_code = _TECHNIQUE_NAMES.get(meta.technique, meta.technique)
    parts = [head, technique_code, meta.pitch or midi_to_pitch(meta.midi or 69),
             meta.dynamics]
    if meta.variant:
        parts.append(meta.variant)
    return "-".join(parts)


@dataclass(frozen=True)
class CorpusEntry:
    path: str
    metadata: NoteMetadata
    duration: float
    checksum: str


@dataclass
class CorpusManifest:
    """Scanned corpus: entries sorted by path plus per-namespace class counts."""

    root: str
    entries: list[CorpusEntry]
    skipped: list[tuple[str, str]] = field(default_factory=list)
    version: int = 1

    def namespace_counts(self, namespace: str) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.entries:
            label = e.metadata.label(namespace)
            counts[label] = counts.get(label, 0) + 1
        return counts

    def labels(self, namespace: str) -> list[str]:
        return [e.metadata.label(namespace) for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "root": self.root,
            "entries": [
                {
                    "path": e.path,
                    "metadata": e.metadata.to_dict(),
                    "duration": e.duration,
                    "checksum": e.checksum,
                }
                for e in self.entries
            ],
            "skipped": [list(s) for s in self.skipped],
            "namespaces": {
                ns: self.namespace_counts(ns) for ns in ("instrument", "technique")
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusManifest":
        if d.get("version") != 1:
            raise CorpusError(f"unsupported manifest version {d.get('version')!r}")
        entries = [
            CorpusEntry(
                path=e["path"],
                metadata=NoteMetadata.from_dict(e["metadata"]),
                duration=e["duration"],
                checksum=e["checksum"],
            )
            for e in d["entries"]
        ]
        return cls(root=d["root"], entries=entries,
                   skipped=[tuple(s) for s in d.get("skipped", [])])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def histogram_csv(self, namespace: str) -> str:
        lines = [f"{namespace},count"]
        for label, count in sorted(self.namespace_counts(namespace).items()):
            lines.append(f"{label},{count}")
        return "\n".join(lines) + "\n"


def _wav_duration(payload: bytes) -> float:
    from scipy.io import wavfile

    rate, data = wavfile.read(io.BytesIO(payload))
    return data.shape[0] / rate


def scan_corpus(root, n_jobs: int = 1) -> CorpusManifest:
    """Recursively scan a directory of WAV files into a manifest.

    Parse failures and unreadable files are collected in manifest.skipped,
    not raised; an entirely audio-free directory is an error. Deterministic:
    entries sorted by relative path.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"not a directory: {root}")
    wavs = sorted(p for p in root.rglob("*") if p.suffix.lower() == ".wav")
    if not wavs:
        raise CorpusError(f"no audio found under {root}")

    entries, skipped = [], []
    for p in wavs:
        rel = p.relative_to(root).as_posix()
        try:
            meta = parse_filename(p.stem)
        except FilenameError as exc:
            skipped.append((rel, str(exc)))
            continue
        try:
            payload = p.read_bytes()
            duration = _wav_duration(payload)
        except Exception as exc:
            skipped.append((rel, f"unreadable: {exc}"))
            continue
        checksum = hashlib.sha256(payload).hexdigest()
        entries.append(CorpusEntry(rel, meta, duration, checksum))
    if not entries:
        raise CorpusError(f"no parseable audio found under {root}")
    return CorpusManifest(root=str(root), entries=entries, skipped=skipped)
