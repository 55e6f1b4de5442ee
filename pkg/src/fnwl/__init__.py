"""Cognitive-workload classification for multichannel fNIRS time series.

The package is organised as a small library plus a command-line front end:

- ``fnwl.nn``         from-scratch layer forward/backward rules and a
                      finite-difference gradient checker
- ``fnwl.filters``    Butterworth bandpass design and zero-phase filtering
- ``fnwl.windows``    sliding-window segmentation and channel standardisation
- ``fnwl.model``      the CNN-LSTM stack (and its CNN-only ablation)
- ``fnwl.training``   Adam, dataset splitting and the training loop
- ``fnwl.baselines``  Naive Bayes, nearest centroid, CART, k-NN
- ``fnwl.evaluation`` confusion matrices, P/R/F1 averaging, one-vs-rest AUC
- ``fnwl.dataio``     raw CSV ingestion, binary window files, synthetic data
- ``fnwl.figures``    confusion-matrix and training-curve renderers
- ``fnwl.cli``        the ``fnwl`` executable
"""

__version__ = "0.1.0"
