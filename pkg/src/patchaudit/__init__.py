"""patchaudit: forensic auditing of image-patch classification corpora.

Detects non-biological bias in labeled patch datasets (class color
signatures, inconsistent JPEG compression, dynamic-range clipping) and
quantifies how exploitable it is with shallow baseline classifiers and a
perturbation-robustness sweep.
"""

__version__ = "0.1.0"
