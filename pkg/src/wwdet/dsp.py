"""Log-mel features and the two spectrogram transforms.

An utterance becomes a log-mel Spectrogram (bands x frames).  Two views
feed the classifiers: the whole spectrogram resized along time to a fixed
frame count, and fixed-width sliding-window slices.
"""

import wave
from dataclasses import dataclass, field

import numpy as np

N_FFT = 1024
HOP = 160
SAMPLE_RATE = 16000
DEFAULT_BANDS = 256
FMAX = 8000.0
LOG_FLOOR_EPS = 1e-10
LOG_FLOOR = float(np.log(LOG_FLOOR_EPS))


@dataclass
class Spectrogram:
    """Log-mel energies, one column per frame."""

    values: np.ndarray                # [bands, frames], float32
    frame_period_s: float = HOP / SAMPLE_RATE

    @property
    def bands(self):
        return self.values.shape[0]

    @property
    def frames(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class SliceConfig:
    """Sliding-window layout over the frame axis.

    ``step_fraction`` is read as step = round(W * s) by default; the
    ``overlap`` mode reads it as the overlapped share instead, giving
    step = round(W * (1 - s)).  Steps are clamped to at least one frame.
    """

    window_frames: int
    step_fraction: float
    step_mode: str = "fraction"

    def __post_init__(self):
        if self.window_frames < 2:
            raise ValueError(f"window_frames must be >= 2, got {self.window_frames}")
        if not 0.0 < self.step_fraction < 1.0:
            raise ValueError(f"step_fraction must be in (0,1), got {self.step_fraction}")
        if self.step_mode not in ("fraction", "overlap"):
            raise ValueError(f"step_mode must be fraction|overlap, got {self.step_mode!r}")

    @property
    def step(self):
        s = self.step_fraction if self.step_mode == "fraction" else 1.0 - self.step_fraction
        return max(1, round(self.window_frames * s))


@dataclass
class Slice:
    start_frame: int
    end_frame: int                    # exclusive; end - start == window
    values: np.ndarray                # [bands, window]
    label: int = 0


def _mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_bands, sample_rate=SAMPLE_RATE, n_fft=N_FFT, fmax=FMAX):
    """Triangular mel filters sampled at the FFT bin centers, [bands, bins]."""
    edges = _mel_to_hz(np.linspace(_mel(0.0), _mel(fmax), n_bands + 2))
    bins = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - lo) / np.maximum(center - lo, 1e-12)
    falling = (hi - bins) / np.maximum(hi - center, 1e-12)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    return fb.astype(np.float32)


def frame_count(n_samples, n_fft=N_FFT, hop=HOP):
    return 1 + (n_samples - n_fft) // hop


def stft_logmel(pcm, sample_rate=SAMPLE_RATE, n_bands=DEFAULT_BANDS):
    """PCM samples -> log-mel Spectrogram.

    Frames are hop-aligned with no centering, windowed by a periodic Hann,
    and reduced to ``n_bands`` triangular mel energies in 0..8 kHz.
    Integer input is treated as 16-bit PCM; float input as already scaled.
    """
    if sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {sample_rate}")
    pcm = np.asarray(pcm)
    if pcm.ndim != 1:
        raise ValueError(f"expected mono 1-d samples, got shape {pcm.shape}")
    if len(pcm) < N_FFT:
        raise ValueError(
            f"audio too short: {len(pcm)} samples < one {N_FFT}-sample window")
    x = pcm.astype(np.float64)
    if np.issubdtype(pcm.dtype, np.integer):
        x /= 32768.0

    n = frame_count(len(pcm))
    idx = np.arange(N_FFT)[None, :] + HOP * np.arange(n)[:, None]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(N_FFT) / N_FFT)
    power = np.abs(np.fft.rfft(x[idx] * window, axis=1)) ** 2   # [frames, bins]
    mel = mel_filterbank(n_bands).astype(np.float64) @ power.T  # [bands, frames]
    return Spectrogram(np.log(mel + LOG_FLOOR_EPS).astype(np.float32))


def read_wav(path):
    """Read a mono 16-bit PCM WAV file -> (int16 samples, sample_rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        if wf.getcomptype() != "NONE":
            raise ValueError(f"{path}: expected uncompressed PCM, got {wf.getcomptype()}")
        raw = wf.readframes(wf.getnframes())
        return np.frombuffer(raw, dtype="<i2"), wf.getframerate()


def write_wav(path, pcm, sample_rate=SAMPLE_RATE):
    pcm = np.asarray(pcm, dtype="<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def bilinear_resize(spec, target_frames):
    """Resample the time axis to ``target_frames`` with the tent kernel.

    Align-corners mapping: output column i reads source position
    i*(frames-1)/(target-1), blending the two nearest columns with weights
    1-|d|.  Resizing to the input length is an exact copy.
    """
    if target_frames < 2:
        raise ValueError(f"target_frames must be >= 2, got {target_frames}")
    if spec.frames < 2:
        raise ValueError(f"cannot resize a {spec.frames}-frame spectrogram")
    v = spec.values
    src = np.arange(target_frames) * ((v.shape[1] - 1) / (target_frames - 1))
    left = np.minimum(src.astype(np.int64), v.shape[1] - 2)
    frac = (src - left).astype(v.dtype)
    out = v[:, left] * (1 - frac) + v[:, left + 1] * frac
    return Spectrogram(np.ascontiguousarray(out), spec.frame_period_s)


def pad_to_window(spec, window_frames):
    """Right-pad short spectrograms with the log floor so slicing works."""
    if spec.frames >= window_frames:
        return spec
    pad = np.full((spec.bands, window_frames - spec.frames), LOG_FLOOR,
                  dtype=spec.values.dtype)
    return Spectrogram(np.concatenate([spec.values, pad], axis=1),
                       spec.frame_period_s)


def slice_starts(frames, cfg):
    """Start frames of the sliding windows: the regular grid plus a tail
    slice flush with the end when the grid does not land there."""
    w = cfg.window_frames
    if frames < w:
        raise ValueError(f"spectrogram has {frames} frames, window needs {w}")
    starts = list(range(0, frames - w + 1, cfg.step))
    if starts[-1] != frames - w:
        starts.append(frames - w)
    return starts


def slice_spectrogram(spec, cfg, label=0):
    """Cut the spectrogram into window-sized slices per ``slice_starts``."""
    w = cfg.window_frames
    return [Slice(s, s + w, spec.values[:, s:s + w], label)
            for s in slice_starts(spec.frames, cfg)]
