"""DET metrics on hand-computed fixtures.

Event scores can be raw floats or detection events; the hand fixture
below is small enough to tally FRR and FAH by hand.
"""

import numpy as np
import pytest

from wwdet import dsp
from wwdet.detector import DetectionEvent
from wwdet.evaluate import (DetPoint, collect_events, det_to_csv, evaluate,
                            frr_at_fah)


def hand_fixture():
    """4 positives (one eventless), 2 negatives totalling one hour."""
    events = {
        "u1": [0.9, 0.4],
        "u2": [0.55],
        "u3": [],
        "u4": [0.7],
        "n1": [0.3, 0.6, 0.8],
        "n2": [0.45],
    }
    labels = {"u1": 1, "u2": 1, "u3": 1, "u4": 1, "n1": 0, "n2": 0}
    durations = {"u1": 2.0, "u2": 2.0, "u3": 2.0, "u4": 2.0,
                 "n1": 1800.0, "n2": 1800.0}
    return events, labels, durations


class TestEvaluate:
    def test_hand_tallied_points(self):
        events, labels, durations = hand_fixture()
        pts = evaluate(events, labels, durations, [0.2, 0.5, 0.55, 0.85])
        # 0.2: only u3 missed; all four negative events alarm
        assert pts[0] == DetPoint(0.2, 0.25, 4.0)
        # 0.5: u1/u2/u4 still detected; 0.6 and 0.8 alarm
        assert pts[1] == DetPoint(0.5, 0.25, 2.0)
        # 0.55: detection needs a strictly higher score, so u2 drops out
        assert pts[2] == DetPoint(0.55, 0.5, 2.0)
        # 0.85: only u1 survives; 0.8 is no longer above threshold
        assert pts[3] == DetPoint(0.85, 0.75, 0.0)

    def test_monotone_in_threshold(self):
        events, labels, durations = hand_fixture()
        pts = evaluate(events, labels, durations,
                       list(np.linspace(0.05, 0.95, 19)))
        frrs = [p.frr for p in pts]
        fahs = [p.fah for p in pts]
        assert frrs == sorted(frrs)
        assert fahs == sorted(fahs, reverse=True)

    def test_event_objects_supply_their_fused_score(self):
        events = {"p": [DetectionEvent(0, 100, 0.8, 0.9, 0.85)],
                  "n": [DetectionEvent(0, 100, 0.1, 0.9, 0.5), 0.2]}
        labels = {"p": 1, "n": 0}
        durations = {"p": 2.0, "n": 3600.0}
        pts = evaluate(events, labels, durations, [0.4, 0.6])
        assert pts[0] == DetPoint(0.4, 0.0, 1.0)   # the 0.5 event alarms
        assert pts[1] == DetPoint(0.6, 0.0, 0.0)

    def test_unscored_utterance_counts_as_missed(self):
        events, labels, durations = hand_fixture()
        del events["u3"]                          # absent key, not empty list
        pts = evaluate(events, labels, durations, [0.2])
        assert pts[0].frr == 0.25

    def test_thresholds_must_increase(self):
        events, labels, durations = hand_fixture()
        with pytest.raises(ValueError, match="strictly increasing"):
            evaluate(events, labels, durations, [0.5, 0.5])
        with pytest.raises(ValueError, match="strictly increasing"):
            evaluate(events, labels, durations, [0.5, 0.3])

    def test_missing_duration_is_an_error(self):
        events, labels, durations = hand_fixture()
        del durations["n2"]
        with pytest.raises(ValueError, match="no duration.*n2"):
            evaluate(events, labels, durations, [0.5])

    def test_needs_negative_hours(self):
        with pytest.raises(ValueError, match="negative audio hours"):
            evaluate({"u": [0.9]}, {"u": 1}, {"u": 2.0}, [0.5])

    def test_needs_a_positive(self):
        with pytest.raises(ValueError, match="positive utterance"):
            evaluate({"n": []}, {"n": 0}, {"n": 3600.0}, [0.5])


class TestFrrAtFah:
    def test_interpolates_between_brackets(self):
        pts = [DetPoint(0.2, 0.1, 3.0), DetPoint(0.4, 0.3, 1.0),
               DetPoint(0.6, 0.5, 0.2)]
        # crossing 0.5 between fah 1.0 and 0.2: t = 0.5/0.8
        assert frr_at_fah(pts, 0.5) == pytest.approx(0.3 + 0.625 * 0.2)

    def test_exact_hit_returns_that_point(self):
        pts = [DetPoint(0.2, 0.1, 1.0), DetPoint(0.4, 0.3, 0.5)]
        assert frr_at_fah(pts, 0.5) == pytest.approx(0.3)

    def test_loosest_threshold_already_clean(self):
        pts = [DetPoint(0.2, 0.12, 0.4), DetPoint(0.4, 0.3, 0.1)]
        assert frr_at_fah(pts, 0.5) == 0.12

    def test_target_never_reached(self):
        pts = [DetPoint(0.2, 0.1, 9.0), DetPoint(0.4, 0.2, 7.0)]
        assert frr_at_fah(pts, 0.5) == 0.2

    def test_unsorted_input_is_sorted_first(self):
        pts = [DetPoint(0.6, 0.5, 0.2), DetPoint(0.2, 0.1, 3.0),
               DetPoint(0.4, 0.3, 1.0)]
        assert frr_at_fah(pts, 0.5) == pytest.approx(0.425)

    def test_empty_points_rejected(self):
        with pytest.raises(ValueError, match="at least one DET point"):
            frr_at_fah([], 0.5)


class TestCsv:
    def test_header_and_formatting(self, tmp_path):
        path = tmp_path / "det.csv"
        det_to_csv([DetPoint(0.123456789, 0.1, 2.5),
                    DetPoint(0.5, 0.0, 0.0)], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "threshold,frr,fah"
        assert lines[1] == "0.123457,0.1,2.5"
        assert lines[2] == "0.5,0,0"


class TestCollectEvents:
    def test_collects_labels_durations_and_events(self, tiny_corpus,
                                                  tiny_models):
        _, entries = tiny_corpus
        m0, m1 = tiny_models
        subset = [e for e in entries if e.label == 1][:2] \
            + [e for e in entries if e.label == 0][:2]
        events, labels, durations = collect_events(
            m0, m1, subset, gamma_floor=0.05,
            slice_cfg=dsp.SliceConfig(100, 0.3), n_bands=32)
        assert set(events) == set(labels) == set(durations)
        assert sorted(labels.values()) == [0, 0, 1, 1]
        for e in subset:
            key = str(e.path)
            pcm, rate = dsp.read_wav(e.path)
            assert durations[key] == pytest.approx(len(pcm) / rate)
            assert isinstance(events[key], list)
        # the floor pass plus the sweep compose into DET points
        pts = evaluate(events, labels, durations, [0.1, 0.5, 0.9])
        assert all(0.0 <= p.frr <= 1.0 for p in pts)
