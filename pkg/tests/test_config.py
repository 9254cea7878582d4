import pytest
from hypothesis import given, strategies as st

from objdiscovery.config import ConfigError, PipelineConfig


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.k, cfg.potential_regions, cfg.iterations) == (10, 5, 5)
    assert cfg.grid.shape == (21, 21, 9)
    assert (cfg.containment_area_ratio, cfg.containment_overlap) == (0.5, 0.8)
    assert cfg.generator.max_proposals == 4000


@given(st.integers(1, 50), st.integers(1, 10), st.floats(0.1, 5.0), st.booleans(),
       st.floats(0.01, 1.0))
def test_text_round_trip(k, iterations, power, centered, overlap):
    cfg = PipelineConfig(k=k, iterations=iterations, appearance_power=power,
                         appearance_centered=centered, containment_overlap=overlap)
    assert PipelineConfig.loads(cfg.dumps()) == cfg


def test_file_round_trip(tmp_path):
    cfg = PipelineConfig(sigma=1.5, workers=3)
    cfg.save(tmp_path / "c.txt")
    assert PipelineConfig.load(tmp_path / "c.txt") == cfg


def test_loads_partial_and_comments():
    cfg = PipelineConfig.loads("# comment\nk = 3  # neighbors\n\nappearance_centered = no\n")
    assert cfg.k == 3 and cfg.appearance_centered is False
    assert cfg.iterations == 5


@pytest.mark.parametrize("text", [
    "k 3", "bogus = 1", "k = 1\nk = 2", "k = three", "appearance_centered = maybe",
    "k = 0", "containment_overlap = 1.5", "patch_size = 60", "appearance_power = 0",
    "sigma = -1", "appearance_threshold = 1",
])
def test_loads_errors(text):
    with pytest.raises(ConfigError):
        PipelineConfig.loads(text)


def test_type_checks_and_replace():
    with pytest.raises(ConfigError):
        PipelineConfig(k=2.5)
    with pytest.raises(ConfigError):
        PipelineConfig(appearance_centered=1)
    with pytest.raises(ConfigError):
        PipelineConfig(sigma=float("nan"))
    assert PipelineConfig(sigma=2).sigma == 2.0
    assert PipelineConfig().replace(k=7).k == 7
    with pytest.raises(ConfigError):
        PipelineConfig().replace(nope=1)
