"""Self-supervised stereo matching on a small NumPy autodiff engine."""

__version__ = "0.1.0"
