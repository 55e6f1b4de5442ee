import numpy as np
import pytest

from fnwl.dataio import synth_generate


@pytest.fixture(scope="session")
def synth_snr10_seed42():
    """The standard synthetic dataset: 4 classes x 150 windows, SNR 10 dB."""
    return synth_generate(classes=4, windows_per_class=150, seed=42, snr_db=10.0)


@pytest.fixture(scope="session")
def synth_small():
    """A light dataset for plumbing tests."""
    return synth_generate(classes=4, windows_per_class=12, seed=7, snr_db=10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
