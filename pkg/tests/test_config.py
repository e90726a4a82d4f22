import pytest

from camrefine.config import (
    PipelineConfig,
    describe,
    load_config,
    parse_value,
    set_param,
)
from camrefine.core import ConfigError


def test_defaults_are_paper_values():
    cfg = PipelineConfig()
    assert cfg.dacg.delta_sigma == 0.22
    assert cfg.dacg.delta_mu == 0.35
    assert cfg.dacg.delta_mu_prime == 0.25
    assert (cfg.dacg.alpha_high_var, cfg.dacg.alpha_high_mean) == (90.0, 75.0)
    assert (cfg.dacg.alpha_low_mean, cfg.dacg.alpha_default) == (80.0, 85.0)
    assert cfg.cba.gamma == 0.5
    assert cfg.sicd.z == 2.0
    assert cfg.modules == ("akd", "dacg", "cba", "sicd")


def test_load_config_none_gives_defaults():
    assert load_config(None) == PipelineConfig()


def test_toml_round_trip(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        """
[pipeline]
modules = ["akd", "cba"]
workers = 4

[dacg]
delta_sigma = 0.18

[cba]
gamma = 0.7
"""
    )
    cfg = load_config(path)
    assert cfg.modules == ("akd", "cba")
    assert cfg.workers == 4
    assert cfg.dacg.delta_sigma == 0.18
    assert cfg.cba.gamma == 0.7
    assert cfg.akd == PipelineConfig().akd  # untouched blocks keep defaults


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[akd]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("[pipeline]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_out_of_range_values_rejected(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[dacg]\ndelta_sigma = 1.5\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("[akd]\nk_base = 4\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("[cba]\ngamma = 0.0\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_invalid_toml_rejected(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("not toml [")
    with pytest.raises(ConfigError):
        load_config(path)


def test_module_list_validated():
    with pytest.raises(ConfigError):
        PipelineConfig(modules=("akd", "nope"))
    with pytest.raises(ConfigError):
        PipelineConfig(modules=("akd", "akd"))
    with pytest.raises(ConfigError):
        PipelineConfig(baseline_mode="something")
    with pytest.raises(ConfigError):
        PipelineConfig(workers=0)


def test_set_param_replaces_without_mutation():
    cfg = PipelineConfig()
    out = set_param(cfg, "dacg.delta_sigma", 0.20)
    assert out.dacg.delta_sigma == 0.20
    assert cfg.dacg.delta_sigma == 0.22
    out2 = set_param(cfg, "pipeline.modules", ("akd",))
    assert out2.modules == ("akd",)
    with pytest.raises(ConfigError):
        set_param(cfg, "dacg.nothing", 1)
    with pytest.raises(ConfigError):
        set_param(cfg, "nowhere.delta", 1)
    with pytest.raises(ConfigError):
        set_param(cfg, "justakey", 1)


def test_parse_value_types():
    assert parse_value("3") == 3
    assert parse_value("0.25") == 0.25
    assert parse_value("true") is True
    assert parse_value("False") is False
    assert parse_value("high_var") == "high_var"


def test_describe_flattens():
    doc = describe(PipelineConfig())
    assert doc["pipeline"]["modules"] == ["akd", "dacg", "cba", "sicd"]
    assert doc["dacg"]["delta_sigma"] == 0.22
    assert isinstance(doc["sicd"]["stoplist"], list)
