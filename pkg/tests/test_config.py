import json

import pytest

from stream_ttt.config import ConfigError, config_from_dict, parse_config
from stream_ttt.presets import PRESETS, preset


def test_minimal_lemma_config_resolves_defaults():
    cfg = parse_config('{"seed": 3, "mode": "lemma-check"}')
    assert cfg.seed == 3
    assert cfg.lemma.instances == 1000 and cfg.lemma.alpha == 1.0
    assert cfg.ttt.window_size == 16 and cfg.ttt.iters_per_frame == 1
    assert cfg.ttt.mask_ratio == 0.8


def test_misspelled_key_is_named():
    text = json.dumps({"mode": "online", "stream": {}, "model": {}, "ttt": {"window_sizee": 4}})
    with pytest.raises(ConfigError, match=r"ttt\.window_sizee: unknown key"):
        parse_config(text)
    with pytest.raises(ConfigError, match="^sede: unknown key"):
        parse_config('{"mode": "lemma-check", "sede": 1}')


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip_is_idempotent(name):
    cfg = config_from_dict(preset(name))
    again = parse_config(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


@pytest.mark.parametrize("data,path", [
    ({"mode": "online", "model": {}}, "stream"),
    ({"mode": "theorem-sweep"}, "sweep"),
    ({"mode": "lemma-check", "lemma": {"instances": 0}}, "lemma.instances"),
    ({"mode": "online", "stream": {}, "model": {}, "ttt": {"window_size": 0}}, "ttt.window_size"),
    ({"mode": "online", "stream": {}, "model": {}, "ttt": {"lr": "fast"}}, "ttt.lr"),
    ({"mode": "online", "stream": {"T": 1.5}, "model": {}}, "stream.T"),
    ({"mode": "online", "stream": {"regime_times": [5, 3]}, "model": {}}, "stream.regime_times"),
    ({"mode": "online", "stream": {"dims": [8, 8]}, "model": {}}, "stream.dims"),
    ({"mode": "online", "stream": {"kind": "constant", "dims": [4]}, "model": {}}, "model.family"),
    ({"mode": "online", "stream": {"kind": "constant", "dims": [4]},
      "model": {"family": "quadratic"}, "ttt": {"objective": "entropy"}}, "ttt.objective"),
    ({"mode": "teleport"}, "mode"),
    ({"mode": "lemma-check", "repeats": 0}, "repeats"),
    ({"mode": "lemma-check", "seed": True}, "seed"),
])
def test_invalid_values_carry_their_path(data, path):
    with pytest.raises(ConfigError, match=f"^{path}"):
        config_from_dict(data)


def test_nullable_fields_accept_null():
    cfg = config_from_dict({"mode": "online", "stream": {"kind": "constant", "dims": [3]},
                            "model": {"family": "quadratic"},
                            "ttt": {"batch_size": None, "lr": None, "seed": None}})
    assert cfg.ttt.batch_size is None and cfg.ttt.lr is None


def test_not_json_is_rejected():
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config("{mode: lemma}")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("nope")
