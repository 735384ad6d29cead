"""TOML configuration for the command-line harness.

Every key has a default; a config file only overrides what it names.
Unknown keys are rejected so typos fail loudly.  See the README for the
full key table.
"""

from dataclasses import fields as dataclass_fields

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .experiments import CompareConfig, HorizonRule, ProbeCase, ProbeConfig, SweepConfig
from .fields import cosine_profile
from .params import ScaledParams


def load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _fill(cls, table, **extra):
    known = {f.name for f in dataclass_fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: _tuplify(v) for k, v in table.items()}
    kw.update(extra)
    return cls(**kw)


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def sweep_config(doc):
    table = dict(doc.get("sweep", {}))
    horizon = _fill(HorizonRule, doc.get("horizon", {}))
    return _fill(SweepConfig, table, horizon=horizon)


def probe_config(doc):
    table = dict(doc.get("probe", {}))
    cases = table.pop("cases", None)
    cfg = _fill(ProbeConfig, table)
    if cases is not None:
        cfg.cases = tuple(_fill(ProbeCase, dict(c)) for c in cases)
    return cfg


def compare_config(doc):
    return _fill(CompareConfig, dict(doc.get("compare", {})))


def scaled_params(doc, context="asymptotic"):
    from .params import validate_scaled

    table = dict(doc.get("params", {}))
    b_spec = table.pop("b_field", None)
    nx = tuple(doc.get("grid", {}).get("nx", (16, 16, 16)))
    if b_spec is not None:
        table["b_field"] = build_b_field(b_spec, nx[:2])
    defaults = {"eps": 0.1, "alpha": 0.0, "sigma": -1, "delta": 1.0, "sigma0": 1}
    defaults.update(table)
    return validate_scaled(ScaledParams(**defaults), context=context)


def build_b_field(spec, shape):
    """Magnetic amplitude profile: {kind="constant", value=1.0} or
    {kind="cosine", offset=1.0, amplitude=0.2, axis=0, wavenumber=1}."""
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return np.full(shape, float(spec.get("value", 1.0)))
    if kind == "cosine":
        off = float(spec.get("offset", 1.0))
        amp = float(spec.get("amplitude", 0.2))
        axis = int(spec.get("axis", 0))
        k = int(spec.get("wavenumber", 1))
        b = off + cosine_profile(shape, [(axis, amp, k)])
        if b.min() <= 0:
            raise ValueError("b_field spec produces values not bounded away from zero")
        return b
    raise ValueError(f"unknown b_field kind {kind!r}")


def field_terms(doc, key, default):
    """Cosine-term lists like [[axis, amplitude, wavenumber], ...]."""
    spec = doc.get(key, {})
    terms = spec.get("terms")
    if terms is None:
        return default
    return tuple((int(a), float(amp), int(k)) for a, amp, k in terms)
