import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from notesim.audio import default_corpus_specs, synthesize_corpus
from notesim.corpus import scan_corpus

N_JOBS = 2


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """24 half-second notes: 4 techniques x 2 instruments x 3 pitches."""
    root = tmp_path_factory.mktemp("small_corpus")
    specs = default_corpus_specs(
        seed=7, midi_pitches=(57, 62, 67), dynamics=("mf",), duration=0.5,
    )
    synthesize_corpus(root, seed=7, specs=specs, n_jobs=N_JOBS)
    manifest = scan_corpus(root)
    assert len(manifest.entries) == 24
    return root, manifest


@pytest.fixture(scope="session")
def full_corpus(tmp_path_factory):
    """The default 400-note corpus used by the acceptance suite."""
    root = tmp_path_factory.mktemp("full_corpus")
    synthesize_corpus(root, seed=42, n_jobs=N_JOBS)
    manifest = scan_corpus(root)
    assert len(manifest.entries) == 400
    return root, manifest


@pytest.fixture(scope="session")
def features_workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("features_cache")
