"""Semi-supervised incident detection on tabular features.

Library layout:

- :mod:`fpmt.numcore`     dense 2-D autodiff core with gradient checking
- :mod:`fpmt.encoder`     layered encoder with split forward passes and heads
- :mod:`fpmt.mixing`      input/hidden-space interpolation and batch pairing
- :mod:`fpmt.losses`      cross-entropy, KL consistency, loss routing
- :mod:`fpmt.gan_augment` per-class GANs for class balancing and expansion
- :mod:`fpmt.data`        synthetic incident data, CSV I/O, standardize, split
- :mod:`fpmt.pipeline`    three-stage trainer (pretrain / supervised / semi)
- :mod:`fpmt.evalcli`     CR/DR/F1 metrics, ablation grid, report emission
- :mod:`fpmt.cli`         command-line front end
"""

__version__ = "0.1.0"
