"""Image-based cargo load-safety screening.

A small CNN stack built directly on numpy arrays (forward and backward
passes written out by hand), a declarative architecture description with
receptive-field analysis, deterministic data augmentation, a synthetic
cargo-photo generator, a two-stage usable/safe classifier, and the review
platform that routes photos past the model to a human operator.
"""

__version__ = "0.1.0"
