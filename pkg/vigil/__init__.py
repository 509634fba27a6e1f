"""vigil: two-stream separable convolutional LSTM violence detection on numpy."""

__version__ = "0.1.0"
