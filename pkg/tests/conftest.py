import numpy as np
import pytest

from subspectral.data import synth_fixture
from subspectral.pipeline import extract_dataset


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """Small synthetic corpus: 10 band-limited classes, 1 s stereo clips."""
    out = tmp_path_factory.mktemp("fixture")
    manifest = synth_fixture(10, 3, out, test_per_class=1, seconds=1.0, seed=42)
    return out, manifest


@pytest.fixture(scope="session")
def features_dir(fixture_dir, tmp_path_factory):
    out_dir, manifest = fixture_dir
    feat = tmp_path_factory.mktemp("features")
    extract_dataset(manifest, out_dir, feat, mel_bins=40)
    return feat


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
