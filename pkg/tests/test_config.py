"""
Configuration defaults, YAML overrides and validation.
"""

from pathlib import Path

import pytest

from dpmc.config import _get_default_config, load_config, validate_config
from dpmc.errors import ConfigError

SHIPPED_YAML = Path(__file__).resolve().parent.parent / "config" / "dpmc.yaml"


def test_defaults_validate():
    config = _get_default_config()
    assert validate_config(config) is config
    assert config["engine"]["mode"] == "prop-on"


def test_shipped_yaml_mirrors_defaults():
    assert SHIPPED_YAML.exists()
    assert load_config(SHIPPED_YAML) == _get_default_config()


def test_no_path_means_builtin_defaults(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert load_config() == _get_default_config()


def test_yaml_override(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("engine:\n  mode: prop-off\npropagation:\n  bound: 5\n", encoding="utf-8")
    config = load_config(path)
    assert config["engine"]["mode"] == "prop-off"
    assert config["engine"]["max_frames"] == 1000
    assert config["propagation"]["bound"] == 5


def test_explicit_overrides_win(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("engine:\n  mode: prop-off\n", encoding="utf-8")
    config = load_config(path, {"engine": {"mode": "prop-on"}})
    assert config["engine"]["mode"] == "prop-on"


@pytest.mark.parametrize(
    "section, key, value",
    [
        ("engine", "mode", "sometimes"),
        ("engine", "max_frames", 0),
        ("engine", "max_refinements", -1),
        ("propagation", "bound", 0),
        ("solver", "euf_max_iterations", 0),
        ("solver", "bv_conflict_budget", -5),
        ("oracle", "bfs_max_bits", 30),
    ],
)
def test_invalid_values(section, key, value):
    with pytest.raises(ConfigError):
        load_config(overrides={section: {key: value}})


def test_top_level_must_be_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- prop-on\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_malformed_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("engine: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)
