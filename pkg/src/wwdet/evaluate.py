"""Detection-error metrics over labeled test audio.

One detection pass (at a low trigger floor) yields scored events per
utterance; sweeping a threshold over the event scores then gives the DET
trade-off between false rejection rate and false alarms per hour.
"""

from dataclasses import dataclass

import numpy as np

from . import dsp
from .detector import score_stream


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    frr: float                         # missed positives / positives
    fah: float                         # false events / negative hours


def _event_scores(events):
    return [e.y_f if hasattr(e, "y_f") else float(e) for e in events]


def evaluate(events_by_utt, labels, durations, thresholds):
    """Sweep thresholds over per-utterance event scores -> DET points.

    A positive utterance counts as detected at a threshold iff it has an
    event scoring above it; every above-threshold event on a negative
    utterance is a false alarm.
    """
    thresholds = list(thresholds)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    missing = [u for u in labels if u not in durations]
    if missing:
        raise ValueError(f"no duration for utterances: {missing[:3]}")

    pos = [u for u, label in labels.items() if label == 1]
    neg = [u for u, label in labels.items() if label == 0]
    neg_hours = sum(durations[u] for u in neg) / 3600.0
    if neg_hours <= 0:
        raise ValueError("evaluation needs nonzero negative audio hours")
    if not pos:
        raise ValueError("evaluation needs at least one positive utterance")

    pos_scores = [max(_event_scores(events_by_utt.get(u, [])), default=-np.inf)
                  for u in pos]
    neg_scores = np.sort(np.concatenate(
        [_event_scores(events_by_utt.get(u, [])) for u in neg]
        + [[]]).astype(np.float64))

    points = []
    for th in thresholds:
        frr = sum(1 for s in pos_scores if not s > th) / len(pos)
        false_alarms = len(neg_scores) - np.searchsorted(neg_scores, th, "right")
        points.append(DetPoint(th, frr, float(false_alarms) / neg_hours))
    return points


def frr_at_fah(points, target_fah=0.5):
    """FRR at the target FAH, linearly interpolated between DET points.

    If even the loosest threshold stays under the target, its FRR is
    returned; if no threshold reaches down to the target, the
    tightest-threshold FRR is returned.
    """
    if not points:
        raise ValueError("frr_at_fah needs at least one DET point")
    pts = sorted(points, key=lambda p: p.threshold)
    for j, p in enumerate(pts):
        if p.fah <= target_fah:
            if j == 0:
                return p.frr
            prev = pts[j - 1]
            if prev.fah == p.fah:
                return p.frr
            t = (prev.fah - target_fah) / (prev.fah - p.fah)
            return prev.frr + t * (p.frr - prev.frr)
    return pts[-1].frr


def det_to_csv(points, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("threshold,frr,fah\n")
        for p in points:
            f.write(f"{p.threshold:.6g},{p.frr:.6g},{p.fah:.6g}\n")


def collect_events(m0, m1, entries, gamma_floor, slice_cfg, n_bands,
                   resize_frames=200):
    """Score every manifest entry once -> (events, labels, durations).

    ``gamma_floor`` should sit below any threshold of interest so the
    sweep in :func:`evaluate` sees the full score range.
    """
    events_by_utt, labels, durations = {}, {}, {}
    for e in entries:
        key = str(e.path)
        pcm, rate = dsp.read_wav(e.path)
        events_by_utt[key] = score_stream(pcm, m0, m1, gamma_floor, slice_cfg,
                                          n_bands, resize_frames)
        labels[key] = e.label
        durations[key] = len(pcm) / rate
    return events_by_utt, labels, durations
