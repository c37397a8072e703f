"""Masking augmentation for training spectrograms.

Active only during the first ``active_epochs`` epochs.  Within a batch,
the first third of the utterances get a time mask, the second third a
frequency mask, and the remainder (including the floor-split leftover)
get both.  Masked cells are set to 0.
"""

from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram


@dataclass(frozen=True)
class AugmentPolicy:
    time_mask_max: int = 30      # frames
    freq_mask_max: int = 20      # bands
    active_epochs: int = 5
    seed: int = 0


def _mask_time(values, rng, max_len):
    frames = values.shape[1]
    length = min(int(rng.integers(0, max_len + 1)), frames)
    if length:
        offset = int(rng.integers(0, frames - length + 1))
        values[:, offset:offset + length] = 0.0


def _mask_freq(values, rng, max_len):
    bands = values.shape[0]
    length = min(int(rng.integers(0, max_len + 1)), bands)
    if length:
        offset = int(rng.integers(0, bands - length + 1))
        values[offset:offset + length, :] = 0.0


def augment_batch(batch, epoch, policy):
    """Apply the thirds masking rule to a batch of Spectrograms.

    Epochs are 1-based; past ``active_epochs`` the batch is returned
    untouched.  Deterministic for a fixed (policy.seed, epoch) pair.
    """
    if epoch > policy.active_epochs:
        return list(batch)
    rng = np.random.default_rng((policy.seed, epoch))
    third = len(batch) // 3
    out = []
    for i, spec in enumerate(batch):
        values = spec.values.copy()
        if i < third:
            _mask_time(values, rng, policy.time_mask_max)
        elif i < 2 * third:
            _mask_freq(values, rng, policy.freq_mask_max)
        else:
            _mask_time(values, rng, policy.time_mask_max)
            _mask_freq(values, rng, policy.freq_mask_max)
        out.append(Spectrogram(values, spec.frame_period_s))
    return out
