import pytest
import yaml

from mambax.config import ExperimentConfig, apply_env_overrides, dump_config, load_config
from mambax.errors import ConfigError


def test_defaults_are_desk_scale():
    cfg = ExperimentConfig().validate()
    m = cfg.model
    assert (m.blocks, m.c_m, m.n_state, m.c_d, m.c_r) == (2, 16, 8, 32, 8)
    assert m.role_map == "b_aux" and m.transition_mode == "adaptive"
    assert (cfg.data.bands, cfg.data.size, cfg.data.n_train, cfg.data.n_test) == (31, 64, 32, 8)


def test_yaml_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict({"task": "mfsr", "scale": 4, "model": {"c_m": 8, "c_d": 32}, "train": {"lr": 5e-4}})
    path = tmp_path / "c.yaml"
    dump_config(cfg, path)
    again = load_config(path, environ={})
    assert again == cfg and again.hash() == cfg.hash()


@pytest.mark.parametrize(
    "tree,field",
    [
        ({"modle": {}}, "modle"),
        ({"model": {"width": 3}}, "model.width"),
        ({"task": "denoise"}, "task"),
        ({"scale": 3}, "scale"),
        ({"model": {"delta_mode": "cubic"}}, "model.delta_mode"),
        ({"model": {"transition_mode": "nearest"}}, "model.transition_mode"),
        ({"model": {"role_map": "x"}}, "model.role_map"),
        ({"model": {"c_d": 16, "c_r": 8}}, "model.c_d"),
        ({"model": {"c_m": "16"}}, "model.c_m"),
        ({"model": {"use_spatial": 1}}, "model.use_spatial"),
        ({"train": {"max_steps": 2.5}}, "train.max_steps"),
        ({"train": {"patch": 33}}, "train.patch"),
        ({"data": {"srf": [0.5, 0.5]}}, "data.srf"),
        ({"data": {"size": 63}}, "data.size"),
    ],
)
def test_schema_errors_name_field(tree, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        ExperimentConfig.from_dict(tree)


def test_env_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"seed": 1, "train": {"max_steps": 5}}))
    cfg = load_config(path, environ={"NSPC_SEED": "9", "NSPC_TRAIN__MAX_STEPS": "50", "NSPC_CHECK_FINITE": "1"})
    assert cfg.seed == 9 and cfg.train.max_steps == 50
    with pytest.raises(ConfigError, match="bogus"):
        load_config(path, environ={"NSPC_BOGUS": "1"})


def test_env_override_does_not_mutate_input():
    tree = {"train": {"lr": 0.1}}
    apply_env_overrides(tree, {"NSPC_TRAIN__LR": "0.2"})
    assert tree == {"train": {"lr": 0.1}}


def test_bad_yaml_and_missing_file(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [unclosed")
    with pytest.raises(ConfigError):
        load_config(bad, environ={})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml", environ={})


def test_hash_changes_with_content():
    a = ExperimentConfig.from_dict({})
    b = ExperimentConfig.from_dict({"seed": 1})
    assert a.hash() != b.hash() and len(a.hash()) == 16
