import pytest

from wwdet import data, train


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """10+10 synthetic utterances shared by the integration tests."""
    root = tmp_path_factory.mktemp("corpus")
    entries = data.generate_toy_corpus(root, 10, 10, seed=101)
    return root, entries


@pytest.fixture(scope="session")
def tiny_models(tiny_corpus):
    """A minimally trained (m0, m1) pair: real plumbing, token accuracy."""
    _, entries = tiny_corpus
    m0, _ = train.train(entries, train.quick_config(
        "m0", n_bands=32, min_epochs=1, max_epochs=1, seed=7))
    m1, _ = train.train(entries, train.quick_config(
        "m1", n_bands=32, min_epochs=1, max_epochs=1, seed=8,
        max_slices_per_utt=2))
    return m0, m1
