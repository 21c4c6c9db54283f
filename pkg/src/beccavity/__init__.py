"""Two-component condensate in a lossy cavity: quadratic open-system toolkit.

Angular-frequency units are kHz throughout, times are in ms, hbar = 1.
Single-mode ordering is (cavity, mode 1, mode 2) and doubled vectors
are ordered (a, b1, b2, a^dag, b1^dag, b2^dag).
"""

__version__ = "0.1.0"

from . import linalg, model, spectral, moments, stability, finite  # noqa: F401
