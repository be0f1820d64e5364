from pathlib import Path

import pytest
from pydantic import ValidationError

from man_rec.errors import ConfigError
from man_rec.models.config import (
    Backbone,
    DataConfig,
    Domain,
    EncoderConfig,
    ModelConfig,
    ModelMode,
    RunConfig,
    UpdateMode,
)
from man_rec.models.util import dump_config, load_config, parse_config_text


def test_nested_keys_and_comments() -> None:
    tree = parse_config_text(
        "# a run\n"
        "model.encoder.layers = 3  # deeper\n"
        "model.item_dim=8\n"
        "\n"
        "train.seed = 4\n"
    )
    assert tree == {
        "model": {"encoder": {"layers": "3"}, "item_dim": "8"},
        "train": {"seed": "4"},
    }


@pytest.mark.parametrize(
    "text, message",
    [
        ("model.item_dim 8", "key = value"),
        ("a = 1\na = 2", "duplicate"),
        ("a = 1\na.b = 2", "not a section"),
    ],
)
def test_malformed_config_text(text: str, message: str) -> None:
    with pytest.raises(ConfigError, match=message):
        parse_config_text(text)


def test_load_run_config(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text(
        "data.prepared = split\n"
        "model.item_dim = 8\n"
        "model.head_layers = 6,3\n"
        "model.encoder.backbone = gated_recurrent\n"
        "model.sfa = false\n"
        "train.update_mode = alternating\n"
    )
    config = load_config(RunConfig, path)
    assert config.model.head_layers == [6, 3]
    assert config.model.encoder.backbone is Backbone.GATED_RECURRENT
    assert not config.model.sfa
    assert config.train.update_mode is UpdateMode.ALTERNATING
    assert config.data.prepared == Path("split")


def test_invalid_values_name_the_file(tmp_path: Path) -> None:
    path = tmp_path / "bad.cfg"
    path.write_text("data.prepared = x\nmodel.item_dim = -1\n")
    with pytest.raises(ConfigError, match="bad.cfg"):
        load_config(RunConfig, path)


def test_unknown_keys_are_rejected(tmp_path: Path) -> None:
    path = tmp_path / "typo.cfg"
    path.write_text("data.prepared = x\nmodel.item_dims = 8\n")
    with pytest.raises(ConfigError, match="item_dims"):
        load_config(RunConfig, path)


def test_dump_loads_back(tmp_path: Path) -> None:
    config = RunConfig(
        data=DataConfig(prepared=Path("split")),
        model=ModelConfig(item_dim=8, isa_layers=[5], mode=ModelMode.SHARED),
    )
    path = tmp_path / "run.cfg"
    path.write_text(dump_config(config))
    assert load_config(RunConfig, path) == config


def test_model_dimensions() -> None:
    config = ModelConfig(item_dim=16)
    assert config.resolved_domain_dim == 4
    assert config.dim == 20
    assert ModelConfig(item_dim=6).resolved_domain_dim == 2
    assert ModelConfig(item_dim=6, domain_dim=3).dim == 9


def test_heads_must_divide_the_dimension() -> None:
    with pytest.raises(ValidationError, match="divisible"):
        ModelConfig(item_dim=5, domain_dim=2, encoder=EncoderConfig(heads=2))


def test_components_only_exist_in_cross_mode() -> None:
    cross = ModelConfig()
    assert cross.uses_isa and cross.uses_sfa and cross.uses_gpa
    single = ModelConfig(mode=ModelMode.SINGLE)
    assert not single.uses_gpa and single.has_local and not single.has_global
    shared = ModelConfig(mode=ModelMode.SHARED)
    assert shared.has_global and not shared.has_local


def test_data_needs_a_source() -> None:
    with pytest.raises(ValidationError, match="prepared"):
        DataConfig(input_a=Path("a.tsv"))
    with pytest.raises(ValidationError, match="earlier"):
        DataConfig(prepared=Path("x"), val_boundary=10, test_boundary=10)


def test_update_mode_domains() -> None:
    assert UpdateMode.JOINT.active_domains == (Domain.A, Domain.B)
    assert UpdateMode.SINGLE_B.active_domains == (Domain.B,)


def test_run_config_overrides() -> None:
    config = RunConfig(data=DataConfig(prepared=Path("x")))
    assert config.with_seed(9).train.seed == 9
    variant = config.with_model(gpa=False, n_groups=2)
    assert not variant.model.gpa and variant.model.n_groups == 2
    assert config.model.gpa
