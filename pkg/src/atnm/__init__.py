"""Multi-label spectrogram tagging with two attention families.

One model scores every timbral-temporal tile of the spectrogram and pools
the per-tile predictions with learned attention; the other looks at the
spectrogram through a short sequence of glimpses whose locations are chosen
by a stochastic policy trained with a score-function gradient.
"""

__version__ = "0.1.0"
