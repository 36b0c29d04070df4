"""Stand-ins for the speech extractor and recognizer, plus synthetic pools.

The surrogate extractor leaves a fixed fraction of interference and noise
and adds a clipping artifact of per-utterance strength.  The surrogate
recognizer corrupts the reference transcript at a rate driven by two
scores of its input against the clean components:

* distortion ``D``: residual power relative to the target, in dB;
* artifact ``A``: power of the part of the input that no linear
  combination of target, interference and noise explains, in dB.

Artifacts are penalised three times as hard as additive distortion, so
an enhanced signal can lose to the raw mixture once its artifacts grow.
Substitutions are driven by per-character uniform draws that depend only
on the seed and utterance id, so CER is monotone in the rate for a fixed
utterance.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..signals import SAMPLE_RATE, MixtureBundle, as_waveform

ALPHABET = "aeioukstnhmyrgzdbpw"


@dataclass(frozen=True)
class SurrogateConfig:
    """Every tunable constant of the surrogate front- and back-end."""

    residual_gain: float = 0.1
    clip_percentile: float = 70.0
    artifact_weight: float = 3.0
    distortion_floor_db: float = -80.0
    artifact_floor_db: float = -40.0
    sigmoid_offset: float = 124.0
    sigmoid_slope: float = 4.5
    # Per-utterance artifact strength: log10(alpha) ~ N(mu, spread) with
    # mu = alpha_log10_centre + alpha_log10_slope * (SIR - SNR - alpha_pivot_db).
    alpha_log10_centre: float = -0.92
    alpha_log10_slope: float = 0.04
    alpha_pivot_db: float = 10.0
    alpha_log10_spread: float = 0.35


DEFAULT_SURROGATE = SurrogateConfig()


# -- front-end -------------------------------------------------------------

def clip_distortion(s, percentile: float = 70.0) -> np.ndarray:
    """Residual of symmetric hard clipping at the given percentile of |s|."""
    s = as_waveform(s)
    c = np.percentile(np.abs(s), percentile)
    return np.clip(s, -c, c) - s


def surrogate_se(bundle: MixtureBundle, artifact_strength: float,
                 cfg: SurrogateConfig = DEFAULT_SURROGATE, extract: str = "target") -> np.ndarray:
    """Enhanced estimate of the target (or, with ``extract="interference"``, the interferer)."""
    if not 0.0 <= artifact_strength <= 1.0:
        raise InvalidInputError("artifact strength must lie in [0, 1]")
    if extract == "target":
        want, other = bundle.target, bundle.interference
    elif extract == "interference":
        want, other = bundle.interference, bundle.target
    else:
        raise InvalidInputError(f"unknown extraction target {extract!r}")
    g = cfg.residual_gain
    out = want + g * other + g * bundle.noise
    if artifact_strength > 0 and np.ptp(want) > 0:
        out = out + artifact_strength * clip_distortion(want, cfg.clip_percentile)
    return out


def draw_artifact_strength(rng: np.random.Generator, sir_db: float, snr_db: float,
                           cfg: SurrogateConfig = DEFAULT_SURROGATE) -> float:
    mu = cfg.alpha_log10_centre + cfg.alpha_log10_slope * (sir_db - snr_db - cfg.alpha_pivot_db)
    return float(min(1.0, 10.0 ** rng.normal(mu, cfg.alpha_log10_spread)))


# -- back-end --------------------------------------------------------------

def _db(num: float, den: float, floor: float) -> float:
    if num <= 0:
        return floor
    return max(floor, 10.0 * math.log10(num / den))


def distortion_scores(x, target, interference, noise,
                      cfg: SurrogateConfig = DEFAULT_SURROGATE) -> tuple[float, float]:
    """``(D, A)`` in dB, each floored (D at -80, A at -40 by default)."""
    x = as_waveform(x, "input")
    s = as_waveform(target, "target")
    if x.size != s.size:
        raise InvalidInputError("input and target lengths differ")
    ps = float(np.dot(s, s))
    if ps <= 0:
        raise InvalidInputError("target has zero power")
    r = x - s
    d = _db(float(np.dot(r, r)), ps, cfg.distortion_floor_db)
    basis = np.stack([s, as_waveform(interference), as_waveform(noise)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    resid = x - basis @ coef
    a = _db(float(np.dot(resid, resid)), ps, cfg.artifact_floor_db)
    return d, a


def substitution_rate(d_db: float, a_db: float, cfg: SurrogateConfig = DEFAULT_SURROGATE) -> float:
    z = (d_db + cfg.artifact_weight * max(a_db, cfg.artifact_floor_db) + cfg.sigmoid_offset)
    z /= cfg.sigmoid_slope
    return 0.5 * (1.0 + math.tanh(0.5 * z))


def _utt_rng(seed: int, utt_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(utt_id.encode("utf-8"))])


def corrupt_transcript(text: str, rate: float, seed: int, utt_id: str) -> str:
    """Substitute each character whose per-utterance uniform draw falls below ``rate``."""
    rng = _utt_rng(seed, utt_id)
    draws = rng.random(len(text))
    shifts = rng.integers(1, len(ALPHABET), size=len(text))
    out = []
    for ch, u, k in zip(text, draws, shifts):
        if u < rate:
            base = ALPHABET.find(ch)
            ch = ALPHABET[(base + k) % len(ALPHABET)] if base >= 0 else ALPHABET[k]
        out.append(ch)
    return "".join(out)


def surrogate_asr(x, target, interference, noise, transcript: str, utt_id: str,
                  seed: int = 0, cfg: SurrogateConfig = DEFAULT_SURROGATE) -> str:
    d, a = distortion_scores(x, target, interference, noise, cfg)
    return corrupt_transcript(transcript, substitution_rate(d, a, cfg), seed, utt_id)


# -- synthetic pools -------------------------------------------------------

# (F1, F2, F3) in Hz for a handful of vowels.
_VOWELS = np.array([
    [730, 1090, 2440], [270, 2290, 3010], [300, 870, 2240],
    [530, 1840, 2480], [570, 840, 2410], [660, 1720, 2410],
])


@dataclass(frozen=True)
class SpeechItem:
    speaker: str
    samples: np.ndarray
    transcript: str


def _formant_gain(freqs, formants, bandwidth=90.0):
    g = np.zeros_like(freqs)
    for k, f in enumerate(formants):
        g += (0.6 ** k) / (1.0 + ((freqs - f) / bandwidth) ** 2)
    return g


def synth_utterance(rng: np.random.Generator, f0: float, formant_scale: float,
                    duration: float = 0.5, sample_rate: int = SAMPLE_RATE,
                    max_harmonic_hz: float = 3800.0) -> tuple[np.ndarray, int]:
    """Voiced syllables separated by short pauses with leading/trailing silence.

    Returns the samples and the number of syllables.
    """
    n = int(round(duration * sample_rate))
    out = np.zeros(n)
    pos = int(rng.uniform(0.04, 0.1) * sample_rate)
    end = n - int(rng.uniform(0.04, 0.1) * sample_rate)
    syllables = 0
    while True:
        length = int(rng.uniform(0.07, 0.14) * sample_rate)
        if pos + length > end:
            break
        t = np.arange(length) / sample_rate
        pitch = f0 * (1.0 + rng.uniform(-0.08, 0.08) * t / t[-1]) * rng.uniform(0.93, 1.07)
        phase = 2 * np.pi * np.cumsum(pitch) / sample_rate
        formants = _VOWELS[rng.integers(len(_VOWELS))] * formant_scale
        seg = np.zeros(length)
        for k in range(1, int(max_harmonic_hz // (pitch.max())) + 1):
            seg += _formant_gain(k * pitch, formants) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
        env = np.sin(np.pi * np.arange(length) / length) ** 0.6
        seg *= env * rng.uniform(0.6, 1.0)
        out[pos:pos + length] += seg
        syllables += 1
        pos += length + int(rng.uniform(0.01, 0.04) * sample_rate)
    active = out[np.abs(out) > 0]
    if active.size:
        out *= 0.08 / np.sqrt(np.mean(active ** 2))
    return out, max(syllables, 1)


def synth_transcript(rng: np.random.Generator, syllables: int) -> str:
    words = ["".join(rng.choice(list(ALPHABET), size=rng.integers(8, 13)))
             for _ in range(syllables)]
    return " ".join(words)


def synthetic_speech_pool(n_speakers: int = 40, utts_per_speaker: int = 8,
                          duration: float = 0.5, seed: int = 0) -> list[SpeechItem]:
    rng = np.random.default_rng(seed)
    pool = []
    for spk in range(n_speakers):
        f0 = rng.uniform(90.0, 240.0)
        scale = rng.uniform(0.85, 1.2)
        for _ in range(utts_per_speaker):
            samples, syl = synth_utterance(rng, f0, scale, duration)
            pool.append(SpeechItem(f"spk{spk:03d}", samples, synth_transcript(rng, syl)))
    return pool


def synthetic_noise_pool(n: int = 8, duration: float = 3.0, seed: int = 0,
                         sample_rate: int = SAMPLE_RATE) -> list[np.ndarray]:
    """Stationary coloured noises with spectral slopes between white and brown."""
    rng = np.random.default_rng(seed)
    length = int(duration * sample_rate)
    freqs = np.fft.rfftfreq(length, 1.0 / sample_rate)
    freqs[0] = freqs[1]
    pool = []
    for _ in range(n):
        slope = rng.uniform(0.0, 2.0)
        spec = rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size)
        spec /= freqs ** (slope / 2.0)
        x = np.fft.irfft(spec, n=length)
        pool.append(0.05 * x / np.sqrt(np.mean(x ** 2)))
    return pool
