import pytest

from lidarbg.config import RunConfig, from_dict, load_config
from lidarbg.errors import ConfigError


def test_defaults():
    c = RunConfig()
    assert c.dpgmm.alpha == 1.0 and c.intensity.K == 5 and c.lof.k == 10
    assert c.cluster.eps == 0.8 and c.track.confirm_hits == 6 and c.track.delete_misses == 7


def test_yaml_roundtrip(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("model_type: adaptive\nintensity:\n  sampling_rate: 8\n"
                 "geofence:\n  include: [[[0, 0], [10, 0], [10, 10]]]\n")
    c = load_config(p)
    assert c.model_type == "adaptive" and c.intensity.sampling_rate == 8
    assert from_dict(c.to_dict()) == c


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"dpgmm": {"alphaa": 2}},
    {"intensity": {"K": 4}},
    {"intensity": {"sampling_rate": 3}},
    {"model_type": "kde"},
    {"dpgmm": {"p_b": 1.5}},
    {"cluster": {"eps": 0}},
    {"lof": 3},
])
def test_rejects(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_digest_tracks_changes():
    a = RunConfig()
    assert a.digest() == RunConfig().digest()
    assert a.digest() != from_dict({"dpgmm": {"alpha": 2.0}}).digest()


def test_bad_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("a: [1,\n")
    with pytest.raises(ConfigError):
        load_config(p)
