"""Black-box SE/ASR adapters.

External tools are wrapped with command templates.  Placeholders:

``{input}``     WAV to process (mixture for SE, signal to recognise for ASR)
``{enroll}``    enrollment WAV of the speaker to extract (SE only)
``{output}``    path the tool must write (WAV for SE; UTF-8 text for ASR)
``{utt_id}``    utterance id
``{manifest}``  manifest the record came from (may be empty)

If an ASR template has no ``{output}`` placeholder, stdout is the transcript.
Outputs can be cached by ``(template, input digests)``.
"""

from __future__ import annotations

import hashlib
import shlex
import shutil
import subprocess
import tempfile
import threading
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import AdapterError, FormatError
from ..wavio import read_wav, to_pcm16, write_wav
from .corpus import ManifestRecord
from .surrogate import DEFAULT_SURROGATE, SurrogateConfig, surrogate_asr, surrogate_se

ENROLL_KEYS = {"target": "enrollment_target", "interferer": "enrollment_interferer"}


def _digest(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(hashlib.sha256(p).digest())
    return h.hexdigest()


class _CommandRunner:
    def __init__(self, template: str, cache_dir=None, timeout: float = 600.0,
                 manifest_path=None):
        self.template = template
        self.tokens = shlex.split(template)
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.timeout = timeout
        self.manifest_path = str(manifest_path or "")
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _run(self, utt_id: str, values: dict) -> str:
        values = {"utt_id": utt_id, "manifest": self.manifest_path, **values}
        try:
            argv = [tok.format(**values) for tok in self.tokens]
        except (KeyError, IndexError) as exc:
            raise AdapterError(f"bad placeholder in template {self.template!r}: {exc}",
                               utt_id=utt_id) from exc
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired as exc:
            raise AdapterError(f"adapter timed out after {self.timeout}s", utt_id=utt_id,
                               diagnostics=str(exc.stderr or "")) from exc
        except OSError as exc:
            raise AdapterError(f"cannot run adapter: {exc}", utt_id=utt_id) from exc
        if proc.returncode != 0:
            raise AdapterError(f"adapter exited with status {proc.returncode}",
                               utt_id=utt_id, diagnostics=proc.stderr[-2000:])
        return proc.stdout

    def _cached(self, key: str, suffix: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{key}{suffix}"


class CommandSE(_CommandRunner):
    """Speech extraction through an external command producing a WAV file."""

    def enhance(self, record: ManifestRecord, speaker: str = "target",
                mixture_path=None) -> np.ndarray:
        mix = Path(mixture_path) if mixture_path else record.path("mixture")
        enroll = record.path(ENROLL_KEYS[speaker])
        key = _digest(self.template.encode(), mix.read_bytes(), enroll.read_bytes())
        cached = self._cached(key, ".wav")
        if cached is not None and cached.exists():
            return read_wav(cached)
        with tempfile.TemporaryDirectory(prefix="se_") as tmp:
            out = Path(tmp) / "enhanced.wav"
            self._run(record.utt_id, {"input": str(mix), "enroll": str(enroll),
                                      "output": str(out)})
            if not out.exists():
                raise AdapterError("adapter produced no output WAV", utt_id=record.utt_id)
            try:
                samples = read_wav(out)
            except FormatError as exc:
                raise AdapterError(f"invalid output WAV: {exc}", utt_id=record.utt_id) from exc
            if cached is not None:
                shutil.copyfile(out, cached)
        return samples


class CommandASR(_CommandRunner):
    """Recognition through an external command; input is written as 16-bit WAV."""

    def recognize(self, record: ManifestRecord, waveform: np.ndarray) -> str:
        pcm = to_pcm16(waveform).tobytes()
        key = _digest(self.template.encode(), pcm)
        cached = self._cached(key, ".txt")
        if cached is not None and cached.exists():
            return cached.read_text(encoding="utf-8")
        with tempfile.TemporaryDirectory(prefix="asr_") as tmp:
            wav = Path(tmp) / "input.wav"
            out = Path(tmp) / "hyp.txt"
            write_wav(wav, waveform)
            stdout = self._run(record.utt_id, {"input": str(wav), "output": str(out),
                                               "enroll": ""})
            if "{output}" in self.template:
                if not out.exists():
                    raise AdapterError("adapter produced no transcript file",
                                       utt_id=record.utt_id)
                try:
                    text = out.read_text(encoding="utf-8")
                except UnicodeDecodeError as exc:
                    raise AdapterError("transcript is not UTF-8", utt_id=record.utt_id) from exc
            else:
                text = stdout
        text = text.strip()
        if cached is not None:
            cached.write_text(text, encoding="utf-8")
        return text


class _ComponentCache:
    """Small LRU of clean components loaded from disk, keyed by utt_id."""

    def __init__(self, size: int = 64):
        self.size = size
        self._items: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, record: ManifestRecord):
        with self._lock:
            if record.utt_id in self._items:
                self._items.move_to_end(record.utt_id)
                return self._items[record.utt_id]
        bundle = record.bundle()
        with self._lock:
            self._items[record.utt_id] = bundle
            while len(self._items) > self.size:
                self._items.popitem(last=False)
        return bundle


class SurrogateSE:
    """In-process surrogate extractor; needs ``artifact_strength`` in the record."""

    def __init__(self, cfg: SurrogateConfig = DEFAULT_SURROGATE):
        self.cfg = cfg
        self._components = _ComponentCache()

    def enhance(self, record: ManifestRecord, speaker: str = "target",
                mixture_path=None) -> np.ndarray:
        if record.artifact_strength is None:
            raise AdapterError("record has no artifact_strength for the surrogate",
                               utt_id=record.utt_id)
        extract = "target" if speaker == "target" else "interference"
        return surrogate_se(self._components.get(record), float(record.artifact_strength),
                            self.cfg, extract=extract)


class SurrogateASR:
    """In-process surrogate recogniser scored against the record's clean components."""

    def __init__(self, cfg: SurrogateConfig = DEFAULT_SURROGATE, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        self._components = _ComponentCache()

    def recognize(self, record: ManifestRecord, waveform: np.ndarray) -> str:
        b = self._components.get(record)
        return surrogate_asr(waveform, b.target, b.interference, b.noise,
                             record.transcript, record.utt_id, self.seed, self.cfg)


def make_se(spec: str | None, cache_dir=None, manifest_path=None, cfg=DEFAULT_SURROGATE):
    """``"surrogate"`` selects the in-process surrogate, anything else is a template."""
    if not spec:
        return None
    if spec == "surrogate":
        return SurrogateSE(cfg)
    return CommandSE(spec, cache_dir=cache_dir, manifest_path=manifest_path)


def make_asr(spec: str | None, cache_dir=None, manifest_path=None, seed: int = 0,
             cfg=DEFAULT_SURROGATE):
    if not spec:
        return None
    if spec == "surrogate":
        return SurrogateASR(cfg, seed)
    return CommandASR(spec, cache_dir=cache_dir, manifest_path=manifest_path)
