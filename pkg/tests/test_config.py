import json

import numpy as np
import pytest

from sackersell.config import (
    DEFAULTS,
    ConfigError,
    build,
    load_schema,
    scan_config,
    validate,
)

MINIMAL = """{
  "command": "spectrum",
  "base": {"type": "finite_periodic", "period": 1},
  "generator": {"type": "constant", "matrix": [[2.0, 0.0], [0.0, 0.5]]}
}"""


def _errors(text, **kw):
    with pytest.raises(ConfigError) as info:
        validate(text, **kw)
    return info.value.errors


def test_minimal_config_parses_with_defaults():
    cfg = validate(MINIMAL)
    assert cfg.command == "spectrum" and cfg.seed == 0
    assert cfg["scan"]["grid"]["step"] == DEFAULTS["scan"]["grid"]["step"]
    c, family, fx = build(cfg)
    assert fx is None and c.dim == 2 and family.labels == ["orbit:1"]


def test_grid_step_zero_message():
    text = MINIMAL[:-2] + ',\n  "scan": {"grid": {"step": 0}}\n}'
    errs = _errors(text)
    assert len(errs) == 1
    e = errs[0]
    assert e["message"] == "grid step must be > 0"
    assert e["path"] == "$.scan.grid.step" and e["line"] == 5


def test_unknown_key_suggests_nearest():
    text = MINIMAL[:-2] + ',\n  "scan": {"gridd": {"step": 0.1}}\n}'
    errs = _errors(text)
    assert len(errs) == 1
    assert "'gridd'" in errs[0]["message"] and "did you mean 'grid'?" in errs[0]["message"]
    assert errs[0]["code"] == "config.unknown_key" and errs[0]["line"] == 5
    assert errs[0]["column"] == text.splitlines()[4].index('"gridd"') + 1


def test_errors_are_aggregated_and_line_sorted():
    text = """{
  "command": "spectrum",
  "seed": -1,
  "base": {"type": "full_shift", "alphabett": 2},
  "generator": {"type": "constant", "matrix": [[1.0]]},
  "scan": {"tol": 0, "grid": {"step": -1}}
}"""
    errs = _errors(text)
    assert len(errs) == 4
    assert [e["line"] for e in errs] == sorted(e["line"] for e in errs)
    msgs = " | ".join(e["message"] for e in errs)
    assert "seed must be a non-negative integer" in msgs
    assert "did you mean 'alphabet'?" in msgs
    assert "bisection tolerance must be > 0" in msgs
    assert "grid step must be > 0" in msgs


def test_syntax_error_has_position():
    errs = _errors('{\n  "command": "spectrum",\n}')
    assert errs[0]["code"] == "config.syntax" and errs[0]["line"] == 3


def test_duplicate_key_reported():
    text = '{\n  "command": "spectrum",\n  "command": "lyapunov",\n  "fixture": {"name": "diag2"}\n}'
    errs = _errors(text)
    assert errs[0]["code"] == "config.duplicate_key" and errs[0]["line"] == 3


def test_semantic_errors():
    errs = _errors('{"command": "spectrum", "base": {"type": "full_shift", "alphabet": 2},'
                   ' "generator": {"type": "symbol", "matrices": [[[1.0]]]}}')
    assert any("alphabet**block = 2" in e["message"] for e in errs)
    errs = _errors('{"command": "spectrum", "fixture": {"name": "diag2"}, "base": {"type": "full_shift"}}')
    assert errs[0]["code"] == "config.conflict"
    errs = _errors('{"command": "spectrum"}')
    assert {e["code"] for e in errs} == {"config.missing_key"}
    errs = _errors('{"command": "spectrum", "fixture": {"name": "diag2"}, "scan": {"grid": {"lower": 1, "upper": 0}}}')
    assert errs[0]["message"] == "grid lower must be < upper"
    errs = _errors('{"command": "spectrum", "base": {"type": "full_shift"}, "generator": {"type": "scalar_symbol",'
                   ' "log_values": [0, 1]}, "measures": {"extra": [{"type": "bernoulli", "probs": [0.5, 0.6]}]}}')
    assert errs[0]["message"] == "probabilities must sum to 1"


def test_unknown_command_and_fixture():
    errs = _errors('{"command": "spectra", "fixture": {"name": "diag9"}}')
    assert len(errs) == 2


def test_overrides_apply_before_validation():
    cfg = validate('{"fixture": {"name": "diag2"}}', {"command": "spectrum", "seed": 7})
    assert cfg.command == "spectrum" and cfg.seed == 7
    errs = _errors('{"fixture": {"name": "diag2"}}', overrides={"command": None})
    assert errs[0]["code"] == "config.missing_key"


def test_config_hash_is_canonical():
    a = validate('{"command": "spectrum", "fixture": {"name": "diag2"}, "seed": 1}')
    b = validate('{\n"seed": 1,\n "fixture": {"name": "diag2"},  "command": "spectrum"}')
    assert a.hash == b.hash
    c = validate('{"command": "spectrum", "fixture": {"name": "diag2"}, "seed": 2}')
    assert a.hash != c.hash


def test_schema_is_valid_draft_2020_12():
    import jsonschema

    jsonschema.Draft202012Validator.check_schema(load_schema())


def test_build_fixture_and_extra_measures():
    cfg = validate('{"command": "lyapunov", "fixture": {"name": "scalar_shift"},'
                   ' "measures": {"p_max": 2, "extra": [{"type": "bernoulli", "probs": [0.5, 0.5]}],'
                   ' "exclude": ["per:01"]}}')
    c, family, fx = build(cfg)
    assert fx.name == "scalar_shift"
    assert family.labels == ["per:0", "per:1", "bernoulli(0.5,0.5)"]


def test_build_empty_family_is_config_error():
    cfg = validate('{"command": "lyapunov", "base": {"type": "finite_periodic", "period": 5},'
                   ' "generator": {"type": "constant", "matrix": [[1.0]]}, "measures": {"p_max": 2}}')
    with pytest.raises(ConfigError, match="measure family is empty"):
        build(cfg)


def test_build_diagonal_operator_model():
    cfg = validate('{"command": "quasicompact", "base": {"type": "finite_periodic"},'
                   ' "generator": {"type": "constant", "matrix": [[2, 0], [0, 1]]},'
                   ' "operator_model": {"type": "diagonal", "weights": "half_plus_inv_k", "size": 2}}')
    c, family, _ = build(cfg)
    assert c.model is not None
    q = family.measures[0].points[0]
    assert np.allclose(np.diag(c.matrix(q)), [2, 1])


def test_scan_config_mapping():
    cfg = validate('{"command": "spectrum", "fixture": {"name": "diag2"}, "scan": {"tol": 0.002, "budget": 5}}')
    sc = scan_config(cfg, threads=3)
    assert sc.tol == 0.002 and sc.budget == 5 and sc.threads == 3 and sc.step == 0.02


def test_error_document_fields():
    errs = _errors('{"command": "spectrum", "fixture": {"name": "diag2"}, "scan": {"n_max": 4}}')
    e = errs[0]
    assert set(e) == {"code", "path", "line", "column", "message", "where"}
    json.dumps(e)
