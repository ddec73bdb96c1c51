import json

import pytest

from uot_lab.config import config_hash, load_config, load_oracle_config, load_twist_config, recipe_path
from uot_lab.errors import ConfigError

BASE = {
    "prior": {"kind": "two_modes", "components": [
        {"mean": [-1.5, 0.0], "sigma": 0.5, "weight": 0.5},
        {"mean": [1.5, 0.0], "sigma": 0.5, "weight": 0.5}]},
    "degradation": {"op": {"kind": "identity", "params": {"dim": 2}}},
    "cost": {"tau": 1.0},
}


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_minimal_config_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, BASE))
    assert cfg.variant == "UOT" and cfg.conj.kind == "kl"
    assert cfg.train.batch_size == 32 and cfg.train.lr_potential == 5e-5 and cfg.train.lr_map == 1e-4
    assert cfg.cost_spec().tau == 1.0


def test_missing_tau_names_field(tmp_path):
    data = json.loads(json.dumps(BASE))
    del data["cost"]["tau"]
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, data))
    assert info.value.field == "cost.tau"
    assert "cost.tau" in str(info.value)


def test_unknown_key_rejected(tmp_path):
    data = dict(BASE, cost={"tau": 1.0, "tua": 2.0})
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, data))
    assert info.value.field == "cost.tua"


@pytest.mark.parametrize("patch,field", [
    ({"cost": {"tau": 0.0}}, "cost.tau"),
    ({"variant": "WGAN"}, "variant"),
    ({"degradation": {"op": {"kind": "warp"}}}, "degradation.op"),
    ({"train": {"batch_size": 0}}, "train.batch_size"),
])
def test_field_level_errors(tmp_path, patch, field):
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, dict(BASE, **patch)))
    assert info.value.field == field


def test_unknown_metric_and_bad_json(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, dict(BASE, eval=["fid"])))
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_inconsistent_cost_is_config_error(tmp_path):
    data = dict(BASE, degradation={"op": {"kind": "downsample", "params": {"dim": 16, "factor": 4}}},
                prior={"kind": "smooth_signals_1d", "signal_len": 16, "n_modes": 4})
    with pytest.raises(ConfigError, match="interp"):
        load_config(_write(tmp_path, data))


def test_ot_variant_forces_identity_conjugate(tmp_path):
    cfg = load_config(_write(tmp_path, dict(BASE, variant="OT")))
    assert cfg.conj.kind == "identity" and cfg.train_config().conj.kind == "identity"


def test_overrides_and_hash(tmp_path):
    p = _write(tmp_path, BASE)
    a = load_config(p, seed=4, output_dir="x")
    b = load_config(p, seed=4, output_dir="y")
    assert a.seed == 4 and a.output_dir == "x"
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(load_config(p, seed=5))
    c = a.with_changes(**{"cost.tau": 0.5})
    assert c.cost.tau == 0.5 and a.cost.tau == 1.0
    with pytest.raises(ConfigError):
        a.with_changes(**{"cost.tau": -1.0})


def test_manifest_is_accepted_as_config(tmp_path):
    cfg = load_config(_write(tmp_path, BASE))
    manifest = {"config": cfg.model_dump(mode="json"), "config_hash": config_hash(cfg)}
    again = load_config(_write(tmp_path, manifest, "manifest.json"))
    assert config_hash(again) == config_hash(cfg)


def test_every_shipped_recipe_loads():
    for name in ["fig1", "imbalance_k3", "multilevel_blur1d", "noise_gaussian_blur1d", "noise_laplace_blur1d",
                 "noise_poisson_blur1d", "tau_sweep", "cost_ablation"]:
        assert load_config(f"recipe:{name}").name
    assert load_oracle_config("recipe:oracle").n_instances >= 1
    assert load_twist_config("recipe:twist_projection").op.kind == "projection"
    with pytest.raises(ConfigError):
        recipe_path("nope")


def test_twist_config_needs_2d_operator(tmp_path):
    with pytest.raises(ConfigError):
        load_twist_config(_write(tmp_path, {"op": {"kind": "identity", "params": {"dim": 3}}}))
