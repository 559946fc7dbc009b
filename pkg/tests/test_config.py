import json
import math

import pytest

from rollerhand.config import ConfigError, RunConfig, load_config, parse_config
from rollerhand.evalsuite import D_AXES, S_AXES

FULL = {
    "seed": 7,
    "out_dir": "somewhere",
    "grasper": {"link_a_mm": 48, "link_b_mm": 122, "roller_radius_mm": 21.5,
                "base_circle_radius_mm": 50, "finger_azimuths_deg": [0, 120, 240],
                "pivot_limit_deg": 90, "pivot_rate_limit_deg": 3, "base_rate_limit_deg": 2,
                "roller_rate_limit_rad": 0.2, "lambda": 0.05, "grip_setpoint_deg": None,
                "grip_preload_deg": 0.5, "w_pos": 1.0, "pivot_flip_band_deg": 0},
    "object": {"shape": "sphere", "radius_mm": 30, "mass_g": 10},
    "sensors": {"sigma_pos_mm": 1, "sigma_ang_deg": 1},
    "controller": {"stop_threshold": 5, "max_steps": 3000},
    "expert": {"suite": "D", "angle_deg": 90, "episodes": 4,
               "start_position_mm": [0, 0, 170]},
    "learner": {"epochs": 10, "batch": 32, "lr": 0.001, "dagger_rounds": 2,
                "min_loss_ratio": 2},
    "eval": {"suite": "all", "trials": 2},
}


def test_full_config_loads_with_units_converted():
    cfg = parse_config(json.dumps(FULL, indent=2))
    assert cfg.grasper.pivot_rate_limit == pytest.approx(math.radians(3))
    assert cfg.grasper.finger_azimuths[1] == pytest.approx(2 * math.pi / 3)
    assert cfg.object_model.is_sphere and cfg.object_model.shape.radius == 30
    assert cfg.sensors.sigma_ang == pytest.approx(math.radians(1))
    assert cfg.expert_axes == D_AXES
    assert len(cfg.expert_specs()) == 6
    assert (cfg.epochs, cfg.batch, cfg.dagger_rounds, cfg.trials) == (10, 32, 2, 2)
    assert cfg.suite == "all" and cfg.seed == 7 and cfg.output_dir() == "somewhere"
    assert cfg.hyper() == {"epochs": 10, "batch": 32, "lr": 0.001, "seed": 7}


def test_defaults():
    cfg = parse_config("{}")
    assert cfg.expert_axes == S_AXES
    assert cfg.expert_episodes == 50
    assert not cfg.object_model.is_sphere
    assert load_config(None).config_hash() == cfg.config_hash()


def test_lambda_zero_names_field_and_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "grasper": {\n    "link_a_mm": 48,\n    "lambda": 0\n  }\n}\n')
    with pytest.raises(ConfigError) as e:
        load_config(p)
    assert str(e.value) == f"{p}:4: grasper.lambda must be in (0, 1], got 0"
    assert e.value.line == 4


@pytest.mark.parametrize("text, fragment", [
    ('{"grasper": {"lamda": 0.1}}', "unknown field grasper.lamda"),
    ('{"colour": 1}', "unknown field 'colour'"),
    ('{"sensors": {"sigma_pos_mm": -1}}', "sensors.sigma_pos_mm must be >= 0"),
    ('{"object": {"shape": "cone"}}', "object.shape"),
    ('{"object": {"shape": "box", "dims_mm": [1, 2]}}', "object.dims_mm"),
    ('{"controller": {"max_steps": 1.5}}', "expected an integer"),
    ('{"expert": {"axes": [[0, 0, 0]]}}', "expert.axes"),
    ('{"expert": {"axes": [[0, 0, 1]], "suite": "S"}}', "either suite or axes"),
    ('{"eval": {"suite": "Q"}}', "eval.suite"),
    ('{"seed": -1}', "seed must be"),
    ('{"grasper": {"pivot_limit_deg": 120}}', "pivot_limit_deg must be in (0, 90]"),
    ('{"grasper": {"lambda": "x"}}', "expected a number"),
    ('[1, 2]', "top level"),
    ('{"seed": 1,}', "invalid JSON"),
])
def test_validation_messages(text, fragment):
    with pytest.raises(ConfigError) as e:
        parse_config(text, "x.json")
    assert fragment in str(e.value)
    assert str(e.value).startswith("x.json:")


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ConfigError) as e:
        load_config(tmp_path / "nope.json")
    assert "nope.json" in str(e.value)


def test_out_dir_from_environment(monkeypatch):
    monkeypatch.setenv("ROLLERHAND_OUT", "/tmp/elsewhere")
    assert RunConfig().output_dir() == "/tmp/elsewhere"
    monkeypatch.delenv("ROLLERHAND_OUT")
    assert RunConfig().output_dir() == "runs"


def _hash(d):
    return parse_config(json.dumps(d)).config_hash()


def test_hash_ignores_layout_and_output_dir():
    base = _hash(FULL)
    assert parse_config(json.dumps(FULL, indent=4, sort_keys=True)).config_hash() == base
    assert _hash({**FULL, "out_dir": "other"}) == base
    # spelling a default explicitly is not a change
    assert _hash({}) == _hash({"learner": {"epochs": 200}})


def _leaves(d, prefix=()):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _leaves(v, prefix + (k,))
        else:
            yield prefix + (k,), v


def _bumped(v):
    if v is None:
        return 1.0
    if isinstance(v, str):
        return {"D": "N", "all": "S", "sphere": "box"}[v]
    if isinstance(v, list):
        return [x + 1 for x in v]
    return v * 0.5 if isinstance(v, float) else v + 1


def test_hash_changes_with_every_semantic_field():
    base = _hash(FULL)
    for path, v in _leaves(FULL):
        if path == ("out_dir",):
            continue
        d = json.loads(json.dumps(FULL))
        node = d
        for k in path[:-1]:
            node = node[k]
        node[path[-1]] = _bumped(v)
        if path[-1] == "pivot_limit_deg":
            node[path[-1]] = 80
        assert _hash(d) != base, path
