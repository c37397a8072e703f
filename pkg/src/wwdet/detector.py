"""Streaming detection: local triggers from M1, global confirmation by M0.

Frames stream into a DetectorState.  Each completed sliding window is
scored by M1; a score above the confidence threshold marks a trigger
point.  When a maximal run of consecutive trigger points closes (a
sub-threshold window arrives, or the stream flushes) and the run holds at
least two triggers, M0 scores the spanned frames resized to the global
input length, and the averaged score decides whether an event fires.
Events are followed by a one-second refractory window.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import dsp
from . import tensor as T
from .train import spec_to_plane


@dataclass(frozen=True)
class DetectorConfig:
    gamma: float                       # trigger threshold, in (0,1)
    slice_cfg: dsp.SliceConfig
    resize_frames: int = 200
    refractory_frames: int = 100       # 1 s at 10 ms frames
    final_gamma: float = None          # None: reuse gamma for the y_f test
    frame_period_s: float = dsp.HOP / dsp.SAMPLE_RATE

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0,1), got {self.gamma}")

    @property
    def event_gamma(self):
        return self.gamma if self.final_gamma is None else self.final_gamma


@dataclass
class DetectionEvent:
    span_start_frame: int
    span_end_frame: int
    y_m0: float
    y_m1: float
    y_f: float

    def to_record(self, frame_period_s):
        return {"start_s": round(self.span_start_frame * frame_period_s, 4),
                "end_s": round(self.span_end_frame * frame_period_s, 4),
                "y_m0": self.y_m0, "y_m1": self.y_m1, "y_f": self.y_f}


class ModelScorer:
    """Positive-class probabilities from a trained (M0, M1) model pair."""

    def __init__(self, m0, m1, resize_frames=200):
        self.m0 = m0.eval()
        self.m1 = m1.eval()
        self.resize_frames = resize_frames

    def score_slices(self, batch_values):
        """[n, bands, window] -> n positive-class scores."""
        planes = np.ascontiguousarray(
            batch_values.transpose(0, 2, 1), dtype=np.float32)[:, None]
        with T.no_grad():
            return self.m1(T.Tensor(planes)).data[:, 1].astype(np.float64)

    def score_span(self, values):
        """[bands, span] -> one positive-class score for the whole span."""
        spec = dsp.bilinear_resize(dsp.Spectrogram(values), self.resize_frames)
        plane = spec_to_plane(spec.values)[None, None]
        with T.no_grad():
            return float(self.m0(T.Tensor(plane)).data[0, 1])


class DetectorState:
    """Incremental trigger machine over one audio stream."""

    def __init__(self, config, score_slices, score_span, bands):
        self.config = config
        self.score_slices = score_slices
        self.score_span = score_span
        self.bands = bands
        self._buf = np.empty((bands, 0), dtype=np.float32)
        self._base = 0                 # absolute frame index of _buf[:, 0]
        self._total = 0
        self._next_start = 0           # next grid slice start (absolute)
        self._run_len = 0
        self._run_start = 0
        self._run_end = 0
        self._run_best = 0.0
        self._refractory_until = 0
        self._flushed = False

    def push(self, frames):
        """Append [bands, k] frames; returns events fired by this push."""
        frames = np.asarray(frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] != self.bands:
            raise ValueError(
                f"expected [{self.bands}, k] frames, got shape {frames.shape}")
        self._buf = np.concatenate([self._buf, frames], axis=1)
        self._total += frames.shape[1]
        events = self._score_ready()
        self._compact()
        return events

    def flush(self):
        """End of stream: score the tail window, then close any open run."""
        if self._flushed:
            return []
        self._flushed = True
        events = []
        w = self.config.slice_cfg.window_frames
        tail = self._total - w
        # the grid covers tail already when it lands on a step multiple
        if tail >= 0 and tail % self.config.slice_cfg.step != 0:
            score = float(self.score_slices(self._window(tail)[None])[0])
            events.extend(self._advance(tail, score))
        events.extend(self._close_run())
        return events

    # internal machinery

    def _window(self, start):
        lo = start - self._base
        return self._buf[:, lo:lo + self.config.slice_cfg.window_frames]

    def _score_ready(self):
        w = self.config.slice_cfg.window_frames
        step = self.config.slice_cfg.step
        starts = []
        while self._next_start + w <= self._total:
            starts.append(self._next_start)
            self._next_start += step
        if not starts:
            return []
        batch = np.stack([self._window(s) for s in starts])
        scores = np.asarray(self.score_slices(batch), dtype=np.float64)
        events = []
        for start, score in zip(starts, scores):
            events.extend(self._advance(start, float(score)))
        return events

    def _advance(self, start, score):
        """Feed one scored window into the run tracker."""
        if score > self.config.gamma:
            if self._run_len == 0:
                self._run_start = start
            self._run_len += 1
            self._run_end = start + self.config.slice_cfg.window_frames
            self._run_best = max(self._run_best, score)
            return []
        return self._close_run()

    def _close_run(self):
        run_len, self._run_len = self._run_len, 0
        best, self._run_best = self._run_best, 0.0
        if run_len < 2:
            return []
        if self._run_start < self._refractory_until:
            return []                  # inside the post-event dead time
        span = self._window_span(self._run_start, self._run_end)
        y_m0 = float(self.score_span(span))
        y_f = (y_m0 + best) / 2.0
        if y_f <= self.config.event_gamma:
            return []
        self._refractory_until = self._run_end + self.config.refractory_frames
        return [DetectionEvent(self._run_start, self._run_end, y_m0, best, y_f)]

    def _window_span(self, start, end):
        return self._buf[:, start - self._base:end - self._base]

    def _compact(self):
        # the flush-time tail window and any open run must stay reachable
        keep_from = min(self._next_start,
                        max(self._total - self.config.slice_cfg.window_frames, 0))
        if self._run_len:
            keep_from = min(keep_from, self._run_start)
        drop = keep_from - self._base
        if drop > 4096:                # bound memory on long quiet streams
            self._buf = np.ascontiguousarray(self._buf[:, drop:])
            self._base = keep_from


def detect_events(spec, config, score_slices, score_span, chunk_frames=None):
    """Run the trigger machine over a whole Spectrogram.

    ``chunk_frames`` feeds the stream in pieces (None = single push); the
    event sequence is identical for every chunking.
    """
    state = DetectorState(config, score_slices, score_span, spec.bands)
    events = []
    if chunk_frames is None:
        events.extend(state.push(spec.values))
    else:
        for lo in range(0, spec.frames, chunk_frames):
            events.extend(state.push(spec.values[:, lo:lo + chunk_frames]))
    events.extend(state.flush())
    return events


def score_stream(wav, m0, m1, gamma, slice_cfg=None, n_bands=dsp.DEFAULT_BANDS,
                 resize_frames=200, chunk_frames=None):
    """WAV (path or PCM samples) -> detection events using trained models."""
    if isinstance(wav, (str,)) or hasattr(wav, "__fspath__"):
        pcm, rate = dsp.read_wav(wav)
    else:
        pcm, rate = wav, dsp.SAMPLE_RATE
    spec = dsp.stft_logmel(pcm, rate, n_bands)
    if slice_cfg is None:
        slice_cfg = dsp.SliceConfig(100, 0.3)
    if spec.frames < slice_cfg.window_frames:
        spec = dsp.pad_to_window(spec, slice_cfg.window_frames)
    config = DetectorConfig(gamma, slice_cfg, resize_frames)
    scorer = ModelScorer(m0, m1, resize_frames)
    return detect_events(spec, config, scorer.score_slices, scorer.score_span,
                         chunk_frames)


def events_to_jsonl(events, path, frame_period_s=dsp.HOP / dsp.SAMPLE_RATE):
    with open(path, "w", encoding="utf-8") as f:
        for e in events:
            f.write(json.dumps(e.to_record(frame_period_s)) + "\n")
