"""Experiment configuration: JSON schema validation and object builders.

Validation collects every problem at once.  Each error carries a
machine-readable ``code``, the JSON path, and the line/column of the
offending key or value in the source text.
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from json.decoder import scanstring

import jsonschema

COMMANDS = ("lyapunov", "spectrum", "quasicompact", "verify-jps", "selftest")

DEFAULTS = {
    "seed": 0,
    "measures": {"p_max": 8, "extra": [], "exclude": []},
    "scan": {
        "grid": {"step": 0.02, "lower": None, "upper": None},
        "tol": 1e-3,
        "n_max": 256,
        "budget": 32,
        "lambda_min": 5e-4,
        "margin": 0.02,
        "kappa": None,
    },
    "lyapunov": {"n_max": 512, "resolution": 0.05, "count": 8},
    "verify": {"n_max": 1024, "ladder_n": 512, "match_tol": 1e-2, "margin": 0.02},
    "quasicompact": {"n_max": 512, "tolerance": 1e-6},
    "output": {"dir": "out", "figures": False},
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    code = "config.invalid"

    def __init__(self, errors: list):
        self.errors = list(errors)
        lines = [f"  {e['where']}: {e['message']}" for e in self.errors]
        super().__init__("invalid configuration:\n" + "\n".join(lines))


@lru_cache(maxsize=1)
def load_schema() -> dict:
    text = resources.files("sackersell").joinpath("schema.json").read_text(encoding="utf-8")
    return json.loads(text)


# ---------------------------------------------------------------------------
# source positions


_WS = re.compile(r"[ \t\n\r]*")


class _Positions:
    """Offsets of every key and value in a JSON document, by path."""

    def __init__(self, text: str):
        self.text = text
        self.keys: dict = {}
        self.values: dict = {}
        self.duplicates: list = []
        self._dec = json.JSONDecoder()
        try:
            self._value(0, ())
        except (ValueError, IndexError):
            pass  # syntax errors are reported by json.loads

    def _skip(self, i):
        return _WS.match(self.text, i).end()

    def _value(self, i, path):
        t = self.text
        i = self._skip(i)
        self.values[path] = i
        ch = t[i]
        if ch == "{":
            i = self._skip(i + 1)
            if t[i] == "}":
                return i + 1
            seen = set()
            while True:
                i = self._skip(i)
                start = i
                key, i = scanstring(t, i + 1)
                if key in seen:
                    self.duplicates.append((path + (key,), start))
                seen.add(key)
                self.keys[path + (key,)] = start
                i = self._skip(i)
                i = self._value(i + 1, path + (key,))  # skip ':'
                i = self._skip(i)
                if t[i] == "}":
                    return i + 1
                i += 1
        if ch == "[":
            i = self._skip(i + 1)
            if t[i] == "]":
                return i + 1
            k = 0
            while True:
                i = self._value(i, path + (k,))
                i = self._skip(i)
                k += 1
                if t[i] == "]":
                    return i + 1
                i += 1
        _, end = self._dec.raw_decode(t, i)
        return end

    def line_col(self, offset: int) -> tuple:
        line = self.text.count("\n", 0, offset) + 1
        col = offset - (self.text.rfind("\n", 0, offset) + 1) + 1
        return line, col

    def locate(self, path: tuple, key: bool = False) -> tuple:
        """Line/column of ``path``; falls back to the nearest ancestor."""
        p = tuple(path)
        while True:
            table = (self.keys, self.values) if key else (self.values, self.keys)
            for tab in table:
                if p in tab:
                    return self.line_col(tab[p])
            if not p:
                return 1, 1
            p = p[:-1]


def _path_str(path) -> str:
    out = "$"
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _error(code, path, message, pos: _Positions | None, key=False) -> dict:
    line, col = pos.locate(path, key) if pos is not None else (None, None)
    where = _path_str(path) if line is None else f"line {line}, col {col} ({_path_str(path)})"
    return {"code": code, "path": _path_str(path), "line": line, "column": col, "message": message, "where": where}


# ---------------------------------------------------------------------------
# schema errors


def _allowed_keys(schema: dict) -> list:
    return sorted(schema.get("properties", {}))


def _schema_errors(doc, pos: _Positions) -> list:
    schema = load_schema()
    validator = jsonschema.Draft202012Validator(schema)
    out = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.validator)):
        path = tuple(err.absolute_path)
        if err.validator == "additionalProperties":
            allowed = _allowed_keys(err.schema)
            extra = [k for k in err.instance if k not in allowed]
            for k in extra:
                near = difflib.get_close_matches(k, allowed, n=1, cutoff=0.5)
                hint = f"; did you mean {near[0]!r}?" if near else f"; allowed keys: {', '.join(allowed)}"
                out.append(_error("config.unknown_key", path + (k,), f"unknown key {k!r}{hint}", pos, key=True))
            continue
        if err.validator == "required":
            out.append(_error("config.missing_key", path, err.message, pos))
            continue
        custom = err.schema.get("x-message") if isinstance(err.schema, dict) else None
        msg = custom or err.message
        out.append(_error(f"config.{err.validator}", path, msg, pos))
    return out


# ---------------------------------------------------------------------------
# semantic checks (cross-field)


def _is_square(m) -> bool:
    return len(m) > 0 and all(len(row) == len(m) for row in m)


def _semantic_errors(doc: dict, pos: _Positions) -> list:
    out = []

    def err(code, path, msg):
        out.append(_error(code, path, msg, pos))

    cmd = doc.get("command")
    if cmd is None:
        err("config.missing_key", (), "'command' is required (in the file or via --command)")
    if cmd != "selftest":
        has_fixture = "fixture" in doc
        if has_fixture and ("base" in doc or "generator" in doc):
            err("config.conflict", ("fixture",), "give either 'fixture' or 'base' + 'generator', not both")
        if not has_fixture:
            for k in ("base", "generator"):
                if k not in doc:
                    err("config.missing_key", (), f"'{k}' is required unless a 'fixture' is given")
    base = doc.get("base", {})
    gen = doc.get("generator", {})
    om = doc.get("operator_model")
    btype, gtype = base.get("type"), gen.get("type")
    need = {"constant": "matrix", "symbol": "matrices", "scalar_symbol": "log_values"}
    if gtype in need and need[gtype] not in gen:
        err("config.missing_key", ("generator",), f"generator type {gtype!r} needs '{need[gtype]}'")
    if gtype == "constant" and "matrix" in gen and not _is_square(gen["matrix"]):
        err("config.shape", ("generator", "matrix"), "matrix must be square")
    if gtype == "symbol" and "matrices" in gen:
        mats = gen["matrices"]
        if not all(_is_square(m) and len(m) == len(mats[0]) for m in mats):
            err("config.shape", ("generator", "matrices"), "matrices must be square and of one size")
        alpha = base.get("alphabet", 2)
        block = gen.get("block", 1)
        if btype == "full_shift" and len(mats) != alpha**block:
            err("config.shape", ("generator", "matrices"),
                f"need alphabet**block = {alpha**block} matrices, got {len(mats)}")
    if gtype == "scalar_symbol" and "log_values" in gen and btype == "full_shift":
        if len(gen["log_values"]) != base.get("alphabet", 2):
            err("config.shape", ("generator", "log_values"), "need one log value per symbol")
    if gtype in ("symbol", "scalar_symbol") and btype not in (None, "full_shift"):
        err("config.variant", ("generator", "type"), f"generator {gtype!r} needs a full_shift base")
    if gtype == "rotation_scaled" and btype not in (None, "circle_rotation"):
        err("config.variant", ("generator", "type"), "generator 'rotation_scaled' needs a circle_rotation base")
    if om is not None:
        t = om.get("type")
        if t in ("diagonal", "banded") and "size" not in om:
            err("config.missing_key", ("operator_model",), f"operator model {t!r} needs 'size'")
        if t == "diagonal" and "weights" not in om:
            err("config.missing_key", ("operator_model",), "operator model 'diagonal' needs 'weights'")
        if t == "banded" and "tail_bound" not in om:
            err("config.missing_key", ("operator_model",), "operator model 'banded' needs 'tail_bound'")
        if t == "diagonal" and om.get("weights") in ("geometric", "power") and len(om.get("params", [])) != 1:
            err("config.shape", ("operator_model", "params"), f"weights {om['weights']!r} take one parameter")
        if t == "banded" and gtype == "constant" and "size" in om and "matrix" in gen:
            if len(gen["matrix"]) != om["size"]:
                err("config.shape", ("operator_model", "size"), "size must equal the generator dimension")
    grid = doc.get("scan", {}).get("grid", {})
    lo, hi = grid.get("lower"), grid.get("upper")
    if isinstance(lo, (int, float)) and isinstance(hi, (int, float)) and lo >= hi:
        err("config.range", ("scan", "grid"), "grid lower must be < upper")
    for i, m in enumerate(doc.get("measures", {}).get("extra", [])):
        t = m.get("type")
        if t == "periodic" and "word" not in m:
            err("config.missing_key", ("measures", "extra", i), "periodic measure needs 'word'")
        if t == "bernoulli":
            probs = m.get("probs")
            if probs is None:
                err("config.missing_key", ("measures", "extra", i), "bernoulli measure needs 'probs'")
            elif not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
                err("config.range", ("measures", "extra", i, "probs"), "probabilities must sum to 1")
    return out


# ---------------------------------------------------------------------------
# public API


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class ExperimentConfig:
    """A validated configuration with defaults filled in."""

    data: dict
    source: dict = field(default_factory=dict)

    @property
    def command(self) -> str:
        return self.data["command"]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.data).encode()).hexdigest()

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)


def validate(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate configuration text.

    ``overrides`` (e.g. from command-line flags) are applied before
    validation.  Raises :class:`ConfigError` with all problems found.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([{
            "code": "config.syntax", "path": "$", "line": e.lineno, "column": e.colno,
            "message": e.msg, "where": f"line {e.lineno}, col {e.colno}",
        }]) from None
    pos = _Positions(text)
    errors = [_error("config.duplicate_key", p, f"duplicate key {p[-1]!r}", pos, key=True) for p, _ in pos.duplicates]
    if not isinstance(doc, dict):
        raise ConfigError(errors + [_error("config.type", (), "configuration must be a JSON object", pos)])
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    errors += _schema_errors(doc, pos)
    if not errors:
        errors += _semantic_errors(doc, pos)
    if errors:
        raise ConfigError(sorted(errors, key=lambda e: (e["line"] or 0, e["column"] or 0)))
    return ExperimentConfig(_merge(DEFAULTS, doc), doc)


def load(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return validate(fh.read(), overrides)


# ---------------------------------------------------------------------------
# builders


def build_system(spec: dict):
    from .base_dynamics import CircleRotation, FinitePeriodic, FullShift

    t = spec["type"]
    if t == "full_shift":
        return FullShift(spec.get("alphabet", 2))
    if t == "circle_rotation":
        kw = {k: spec[k] for k in ("rho", "tolerance") if k in spec}
        return CircleRotation(**kw)
    return FinitePeriodic(spec.get("period", 1))


def build_generator(spec: dict):
    import numpy as np

    from .cocycle import ConstantGenerator, SymbolGenerator, scalar_symbol_generator
    from .fixtures import rotation_scaled

    t = spec["type"]
    if t == "constant":
        return ConstantGenerator(np.asarray(spec["matrix"], dtype=float))
    if t == "symbol":
        return SymbolGenerator(np.asarray(spec["matrices"], dtype=float), spec.get("block", 1))
    if t == "scalar_symbol":
        return scalar_symbol_generator(spec["log_values"])
    return rotation_scaled(spec.get("scale", 3.0))


def build_model(spec: dict | None):
    from .quasicompactness import Banded, DiagonalOperator, FiniteDim, weight_family

    if spec is None or spec["type"] == "finite_dim":
        return None if spec is None else FiniteDim()
    if spec["type"] == "diagonal":
        return DiagonalOperator(weight_family(spec["weights"], *spec.get("params", [])), spec["size"])
    return Banded(spec["size"], spec["tail_bound"])


def _extra_measure(spec: dict):
    from .base_dynamics import Bernoulli, LebesgueCircle, periodic_word

    t = spec["type"]
    if t == "periodic":
        return periodic_word(spec["word"], spec.get("label"))
    if t == "bernoulli":
        return Bernoulli(tuple(spec["probs"]))
    return LebesgueCircle()


def build(cfg: ExperimentConfig):
    """``(cocycle, family, fixture_or_None)`` described by ``cfg``."""
    from .base_dynamics import periodic_measures
    from .cocycle import Cocycle
    from .fixtures import get as get_fixture
    from .quasicompactness import FiniteDim, diagonal_operator_cocycle, weight_family

    meas = cfg["measures"]
    fx = None
    if "fixture" in cfg.data:
        fx = get_fixture(cfg["fixture"]["name"], **cfg["fixture"].get("params", {}))
        c = fx.cocycle
        family = fx.family
        if "p_max" in cfg.source.get("measures", {}):
            family = periodic_measures(c.system, meas["p_max"])
    else:
        system = build_system(cfg["base"])
        om = cfg.get("operator_model")
        if om is not None and om["type"] == "diagonal" and cfg["generator"]["type"] != "constant":
            raise ConfigError([_error("config.variant", ("operator_model",),
                                      "a diagonal operator model needs a constant generator", None)])
        gen = build_generator(cfg["generator"])
        model = build_model(om)
        if om is not None and om["type"] == "diagonal":
            import numpy as np

            head = np.diag(np.asarray(cfg["generator"]["matrix"], dtype=float))
            c = diagonal_operator_cocycle(system, weight_family(om["weights"], *om.get("params", [])),
                                          om["size"], head=head)
        else:
            try:
                c = Cocycle(system, gen, model=None if isinstance(model, FiniteDim) else model)
            except ValueError as e:
                raise ConfigError([_error("config.variant", ("generator",), str(e), None)]) from None
        family = periodic_measures(system, meas["p_max"])
    extras = [_extra_measure(m) for m in meas.get("extra", [])]
    if extras:
        family = family.union(extras)
    if meas.get("exclude"):
        family = family.without(meas["exclude"])
    if len(family) == 0:
        raise ConfigError([_error("config.empty_family", ("measures",),
                                  "measure family is empty (raise measures.p_max or add extra measures)", None)])
    for mu in family:
        if hasattr(mu, "validate"):
            try:
                mu.validate(c.system)
            except ValueError as e:
                raise ConfigError([_error("config.variant", ("measures",), str(e), None)]) from None
    return c, family, fx


def scan_config(cfg: ExperimentConfig, threads: int = 1):
    from .spectrum import ScanConfig

    s = cfg["scan"]
    g = s["grid"]
    return ScanConfig(
        step=g["step"], tol=s["tol"], n_max=s["n_max"], p_max=cfg["measures"]["p_max"],
        kappa=s["kappa"], budget=s["budget"], lower=g["lower"], upper=g["upper"],
        lambda_min=s["lambda_min"], margin=s["margin"], threads=threads,
    )
