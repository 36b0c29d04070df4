"""Manifests and SIR/SNR-controlled corpus simulation.

A manifest is a JSON-lines file, one utterance per line.  Every record
carries ``"schema": 1``; file paths are stored relative to the manifest's
directory.  Keys are written sorted so identical inputs give identical
bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ..errors import FormatError, InvalidInputError
from ..signals import MixtureBundle, fit_length, mix_at
from ..wavio import peak_gain, read_wav, write_wav
from .surrogate import DEFAULT_SURROGATE, SpeechItem, SurrogateConfig, draw_artifact_strength

SCHEMA_VERSION = 1
PATH_KEYS = (
    "target", "interference", "noise", "mixture", "enhanced", "enhanced_interferer",
    "enrollment_target", "enrollment_interferer",
)
REQUIRED_PATHS = ("target", "interference", "noise", "mixture", "enrollment_target")


@dataclass(frozen=True)
class ManifestRecord:
    utt_id: str
    paths: dict[str, str]
    transcript: str
    true_sir_db: float
    true_snr_db: float
    peak_gain: float = 1.0
    artifact_strength: float | None = None
    speakers: tuple[str, str] | None = None
    root: Path = field(default=Path("."), compare=False)

    def has(self, key: str) -> bool:
        return key in self.paths

    def path(self, key: str) -> Path:
        if key not in self.paths:
            raise InvalidInputError(f"{self.utt_id}: manifest record has no {key!r} path")
        return self.root / self.paths[key]

    def load(self, key: str) -> np.ndarray:
        return read_wav(self.path(key))

    def bundle(self) -> MixtureBundle:
        """Components as stored on disk (after the common peak gain)."""
        return MixtureBundle.from_components(
            self.load("target"), self.load("interference"), self.load("noise"))

    def with_path(self, key: str, path) -> "ManifestRecord":
        rel = Path(path)
        try:
            rel = rel.resolve().relative_to(self.root.resolve())
        except ValueError:
            rel = rel.resolve()
        return replace(self, paths={**self.paths, key: rel.as_posix()})

    def to_json(self) -> str:
        obj = {
            "schema": SCHEMA_VERSION,
            "utt_id": self.utt_id,
            "paths": dict(sorted(self.paths.items())),
            "transcript": self.transcript,
            "true_sir_db": self.true_sir_db,
            "true_snr_db": self.true_snr_db,
            "peak_gain": self.peak_gain,
        }
        if self.artifact_strength is not None:
            obj["artifact_strength"] = self.artifact_strength
        if self.speakers is not None:
            obj["speakers"] = list(self.speakers)
        return json.dumps(obj, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str, root: Path) -> "ManifestRecord":
        obj = json.loads(line)
        if obj.get("schema") != SCHEMA_VERSION:
            raise FormatError(f"unsupported manifest schema {obj.get('schema')!r}")
        paths = obj["paths"]
        unknown = set(paths) - set(PATH_KEYS)
        if unknown:
            raise FormatError(f"unknown path keys {sorted(unknown)}")
        missing = [k for k in REQUIRED_PATHS if k not in paths]
        if missing:
            raise FormatError(f"{obj['utt_id']}: missing paths {missing}")
        return cls(
            utt_id=obj["utt_id"],
            paths=paths,
            transcript=obj["transcript"],
            true_sir_db=float(obj["true_sir_db"]),
            true_snr_db=float(obj["true_snr_db"]),
            peak_gain=float(obj.get("peak_gain", 1.0)),
            artifact_strength=obj.get("artifact_strength"),
            speakers=tuple(obj["speakers"]) if "speakers" in obj else None,
            root=root,
        )


def write_manifest(path, records: Sequence[ManifestRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    seen = set()
    for r in records:
        if r.utt_id in seen:
            raise InvalidInputError(f"duplicate utt_id {r.utt_id!r}")
        seen.add(r.utt_id)
    path.write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")


def read_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    root = path.parent
    records = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(ManifestRecord.from_json(line, root))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}:{n}: {exc}") from exc
    if len({r.utt_id for r in records}) != len(records):
        raise FormatError(f"{path}: duplicate utt_id")
    return records


def sir_snr_bin(record: ManifestRecord, bin_db: float = 10.0) -> tuple[float, float]:
    """Nearest multiple of ``bin_db`` for the record's true SIR and SNR."""
    def snap(v):
        return float(bin_db * math.floor(v / bin_db + 0.5))
    return snap(record.true_sir_db), snap(record.true_snr_db)


# -- simulation ------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Fixed (SIR, SNR) cells, assigned to utterances round-robin."""

    sir_values: tuple[float, ...] = (0.0, 10.0, 20.0)
    snr_values: tuple[float, ...] = (0.0, 10.0, 20.0)
    count: int = 9

    def draw(self, rng: np.random.Generator) -> Iterator[tuple[float, float]]:
        cells = [(a, b) for a in self.sir_values for b in self.snr_values]
        for k in range(self.count):
            yield cells[k % len(cells)]


@dataclass(frozen=True)
class RangeSpec:
    """SIR and SNR drawn independently and uniformly from ``[low, high]`` dB."""

    low: float = -2.0
    high: float = 22.0
    count: int = 100

    def draw(self, rng: np.random.Generator) -> Iterator[tuple[float, float]]:
        for _ in range(self.count):
            sir, snr = rng.uniform(self.low, self.high, size=2)
            yield float(sir), float(snr)


def _by_speaker(pool: Sequence[SpeechItem]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for k, item in enumerate(pool):
        groups.setdefault(item.speaker, []).append(k)
    return groups


def simulate_corpus(
    speech_pool: Sequence[SpeechItem],
    noise_pool: Sequence[np.ndarray],
    spec: GridSpec | RangeSpec,
    out_dir,
    seed: int = 0,
    prefix: str = "utt",
    overlap_ratio: float = 1.0,
    surrogate: SurrogateConfig | None = DEFAULT_SURROGATE,
    manifest_name: str = "manifest.jsonl",
) -> list[ManifestRecord]:
    """Draw target/interferer/noise triples, mix them, and write WAVs + manifest.

    Interference and noise are looped or truncated to the target length.
    ``overlap_ratio`` < 1 delays the interferer so that only that fraction of
    the target is overlapped.  When ``surrogate`` is given, an artifact
    strength for the surrogate extractor is drawn and stored per utterance.
    """
    if not speech_pool or not noise_pool:
        raise InvalidInputError("speech and noise pools must be non-empty")
    if not 0.0 < overlap_ratio <= 1.0:
        raise InvalidInputError("overlap_ratio must lie in (0, 1]")
    groups = {s: idx for s, idx in _by_speaker(speech_pool).items() if len(idx) >= 2}
    speakers = sorted(groups)
    if len(speakers) < 2:
        raise InvalidInputError("need at least two speakers with two or more utterances each")

    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    rng = np.random.default_rng(seed)
    records = []
    for k, (sir, snr) in enumerate(spec.draw(rng)):
        utt = f"{prefix}{k:05d}"
        spk_t, spk_i = rng.choice(len(speakers), size=2, replace=False)
        t_idx, t_enr = rng.choice(groups[speakers[spk_t]], size=2, replace=False)
        i_idx, i_enr = rng.choice(groups[speakers[spk_i]], size=2, replace=False)
        target = speech_pool[t_idx].samples
        length = target.size
        interf = fit_length(speech_pool[i_idx].samples, length)
        if overlap_ratio < 1.0:
            delay = int(round((1.0 - overlap_ratio) * length))
            interf = np.concatenate([np.zeros(delay), interf[:length - delay]])
        noise_src = noise_pool[rng.integers(len(noise_pool))]
        noise = fit_length(noise_src, length, int(rng.integers(noise_src.size)))
        bundle = mix_at(target, interf, noise, sir, snr)
        alpha = (draw_artifact_strength(rng, sir, snr, surrogate)
                 if surrogate is not None else None)

        gain = peak_gain(bundle.observed, bundle.target, bundle.interference, bundle.noise)
        enr_t = speech_pool[t_enr].samples
        enr_i = speech_pool[i_enr].samples
        signals = {
            "target": bundle.target, "interference": bundle.interference,
            "noise": bundle.noise, "mixture": bundle.observed,
            "enrollment_target": enr_t * peak_gain(enr_t),
            "enrollment_interferer": enr_i * peak_gain(enr_i),
        }
        paths = {}
        for key, sig in signals.items():
            rel = f"wav/{utt}_{key}.wav"
            scale = gain if not key.startswith("enrollment") else 1.0
            write_wav(out_dir / rel, sig * scale)
            paths[key] = rel
        records.append(ManifestRecord(
            utt_id=utt,
            paths=paths,
            transcript=speech_pool[t_idx].transcript,
            true_sir_db=bundle.true_sir_db,
            true_snr_db=bundle.true_snr_db,
            peak_gain=gain,
            artifact_strength=alpha,
            speakers=(speakers[spk_t], speakers[spk_i]),
            root=out_dir,
        ))
    write_manifest(out_dir / manifest_name, records)
    return records


def load_speech_list(path) -> list[SpeechItem]:
    """Read a speech pool from a TSV list: ``wav_path<TAB>speaker<TAB>transcript``."""
    path = Path(path)
    pool = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{n}: expected wav_path, speaker, transcript")
        wav = Path(parts[0])
        if not wav.is_absolute():
            wav = path.parent / wav
        pool.append(SpeechItem(parts[1], read_wav(wav), parts[2]))
    return pool


def load_noise_dir(path) -> list[np.ndarray]:
    return [read_wav(p) for p in sorted(Path(path).glob("*.wav"))]
