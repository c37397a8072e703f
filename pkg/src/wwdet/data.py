"""Dataset manifests and the synthetic desk-scale keyword corpus.

The synthetic keyword is a fixed two-segment motif: an upward chirp
followed by a steady two-tone dyad, stretched to a random total duration
of 0.3..2.0 s and embedded in low-level noise.  Decoy negatives reuse the
ingredients without reproducing the motif: a single segment alone, or the
two segments in reversed order.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp

KEYWORD_MIN_S = 0.3
KEYWORD_MAX_S = 2.0
UTT_MIN_S = 2.0
UTT_MAX_S = 6.0
CHIRP_LO_HZ = 400.0
CHIRP_HI_HZ = 1200.0
DYAD_HZ = (700.0, 1400.0)
FADE_S = 0.01


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int
    keyword_id: str = None


def load_manifest(path):
    """Read a JSON-lines manifest; paths resolve relative to its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: malformed JSON on line {lineno}: {e}") from None
            if "path" not in rec or "label" not in rec:
                raise ValueError(f"{path}: line {lineno} missing path/label")
            if rec["label"] not in (0, 1):
                raise ValueError(
                    f"{path}: line {lineno} label must be 0 or 1, got {rec['label']!r}")
            wav = base / rec["path"]
            if not wav.exists():
                raise FileNotFoundError(f"{path}: line {lineno} refers to missing {wav}")
            entries.append(ManifestEntry(wav, int(rec["label"]), rec.get("keyword_id")))
    return entries


def save_manifest(entries, path):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            rec = {"path": str(Path(e.path).relative_to(path.parent)), "label": e.label}
            if e.keyword_id is not None:
                rec["keyword_id"] = e.keyword_id
            f.write(json.dumps(rec) + "\n")


def _fade(signal, sr):
    n = min(int(FADE_S * sr), len(signal) // 2)
    if n:
        ramp = np.linspace(0.0, 1.0, n)
        signal[:n] *= ramp
        signal[-n:] *= ramp[::-1]
    return signal


def _chirp(duration_s, sr):
    t = np.arange(int(duration_s * sr)) / sr
    phase = 2.0 * np.pi * (CHIRP_LO_HZ * t
                           + (CHIRP_HI_HZ - CHIRP_LO_HZ) * t ** 2 / (2.0 * duration_s))
    return _fade(np.sin(phase), sr)


def _dyad(duration_s, sr):
    t = np.arange(int(duration_s * sr)) / sr
    tone = sum(np.sin(2.0 * np.pi * f * t) for f in DYAD_HZ) / len(DYAD_HZ)
    return _fade(tone, sr)


def keyword_motif(duration_s, sr=dsp.SAMPLE_RATE):
    """The positive-class motif: chirp then dyad, each half the duration."""
    half = duration_s / 2.0
    return np.concatenate([_chirp(half, sr), _dyad(half, sr)])


def _decoy_motif(duration_s, kind, sr=dsp.SAMPLE_RATE):
    if kind == "chirp":
        return _chirp(duration_s, sr)
    if kind == "dyad":
        return _dyad(duration_s, sr)
    half = duration_s / 2.0                       # reversed segment order
    return np.concatenate([_dyad(half, sr), _chirp(half, sr)])


def _render(rng, motif):
    """Place ``motif`` (or nothing) at a random position in noise."""
    sr = dsp.SAMPLE_RATE
    utt_s = rng.uniform(UTT_MIN_S, UTT_MAX_S)
    n = int(utt_s * sr)
    noise_level = rng.uniform(0.005, 0.02)
    audio = rng.standard_normal(n) * noise_level
    start = 0
    if motif is not None:
        gain = rng.uniform(0.25, 0.5)
        start = int(rng.uniform(0.0, n - len(motif)))
        audio[start:start + len(motif)] += gain * motif
    pcm = np.clip(audio * 32767.0, -32768, 32767).astype(np.int16)
    return pcm, start / sr


def generate_toy_corpus(out_dir, n_pos, n_neg, seed):
    """Write a labeled corpus of WAVs and return its manifest entries.

    Deterministic per seed.  Half of the negatives carry a decoy motif,
    half are plain noise.  Also records keyword placement in a sidecar
    ``spans.json`` for diagnostics.
    """
    if n_pos < 10 or n_neg < 10:
        raise ValueError(f"need at least 10 of each class, got {n_pos}/{n_neg}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries, spans = [], {}

    for i in range(n_pos):
        duration = rng.uniform(KEYWORD_MIN_S, KEYWORD_MAX_S)
        pcm, start_s = _render(rng, keyword_motif(duration))
        name = f"pos_{i:04d}.wav"
        dsp.write_wav(out_dir / name, pcm)
        entries.append(ManifestEntry(out_dir / name, 1, "toyword"))
        spans[name] = {"start_s": round(start_s, 4), "duration_s": round(duration, 4)}

    decoys = ("chirp", "dyad", "reversed")
    for i in range(n_neg):
        if i % 2 == 0:
            motif = _decoy_motif(rng.uniform(KEYWORD_MIN_S, KEYWORD_MAX_S),
                                 decoys[(i // 2) % len(decoys)])
        else:
            motif = None
        pcm, _ = _render(rng, motif)
        name = f"neg_{i:04d}.wav"
        dsp.write_wav(out_dir / name, pcm)
        entries.append(ManifestEntry(out_dir / name, 0))

    with open(out_dir / "spans.json", "w", encoding="utf-8") as f:
        json.dump(spans, f, indent=1, sort_keys=True)
    save_manifest(entries, out_dir / "manifest.jsonl")
    return entries


def generate_negative_audio(out_dir, total_s, seed, chunk_s=60.0):
    """Long negative background audio as fixed-size chunks, for FAH floors.

    Chunks are noise with occasional decoy motifs sprinkled in.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    sr = dsp.SAMPLE_RATE
    entries = []
    n_chunks = int(np.ceil(total_s / chunk_s))
    for i in range(n_chunks):
        n = int(chunk_s * sr)
        audio = rng.standard_normal(n) * rng.uniform(0.005, 0.02)
        for _ in range(rng.integers(0, 3)):
            motif = _decoy_motif(rng.uniform(KEYWORD_MIN_S, KEYWORD_MAX_S),
                                 ("chirp", "dyad", "reversed")[rng.integers(0, 3)])
            start = int(rng.uniform(0.0, n - len(motif)))
            audio[start:start + len(motif)] += rng.uniform(0.25, 0.5) * motif
        pcm = np.clip(audio * 32767.0, -32768, 32767).astype(np.int16)
        name = f"bg_{i:04d}.wav"
        dsp.write_wav(out_dir / name, pcm)
        entries.append(ManifestEntry(out_dir / name, 0))
    save_manifest(entries, out_dir / "manifest.jsonl")
    return entries
