import pytest

from citegeom.corpus import load_corpus
from citegeom.synth import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def mixed_synth(tmp_path_factory):
    """Mixed-regime planted corpus shared by geometry/disruption tests."""
    out = tmp_path_factory.mktemp("mixed_synth")
    spec = SyntheticSpec(
        n_publications=120, dimension=32, seed=11, n_years=12,
        regime_mix={"consolidating": 0.4, "balanced": 0.3, "exploratory": 0.3},
    )
    result = generate_synthetic(spec, out)
    loaded = load_corpus(result.corpus_path, result.embeddings_path)
    return loaded, result


@pytest.fixture(scope="session")
def demo_corpus(tmp_path_factory):
    """The bundled demo: default synthetic spec, fixed seed."""
    out = tmp_path_factory.mktemp("demo_corpus")
    result = generate_synthetic(SyntheticSpec(), out)
    return result
