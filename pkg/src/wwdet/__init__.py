"""Wake-word detection with small residual classifiers.

The package covers the full path from PCM samples to detection events:
log-mel features, two spectrogram classifiers (a global one on resized
spectrograms and a local one on sliding windows), a streaming trigger
state machine, and DET-style evaluation.
"""

from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = ["Tensor", "no_grad", "__version__"]
