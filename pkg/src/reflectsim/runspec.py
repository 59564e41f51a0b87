"""Run specifications: JSON documents validated against a versioned schema."""

from __future__ import annotations

import copy
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .chain import ChainModel, ChainParams
from .globules import GlobuleModel, GlobuleParams, PairPotential
from .integrator import SdeCoefficients, SimulationConfig, gradient_system

SCHEMA_VERSION = 1

DEFAULTS = {
    "coefficients": {"sigma": 1.0, "potential": {"type": "zero"}},
    "numeric": {"dt": 1e-3, "t_end": 1.0, "seed": 0, "stride": 1, "replicas": 1},
    "geometry": {"samples": 1000, "mc_points": 1000, "inflated_delta": 0.01},
    "gibbs": {"samples": 1000, "window_low": 0.0, "window_high": 10.0},
    "validate": {"burn_in": 0.0, "thin": 1, "level": 0.001, "oracle_samples": 10000},
    "output": {"dir": ".", "prefix": "run"},
}


class SpecError(ValueError):
    """The run specification is malformed or inconsistent."""


def load_schema(name: str = "runspec") -> dict:
    text = resources.files("reflectsim").joinpath(f"schemas/{name}.schema.json").read_text()
    return json.loads(text)


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        out[key] = _merge(out[key], value) if isinstance(value, dict) and isinstance(out.get(key), dict) else value
    return out


@dataclass
class RunSpec:
    command: str
    model: dict
    coefficients: dict = field(default_factory=dict)
    numeric: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)
    gibbs: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunSpec":
        """Validate ``data`` and fill in defaults."""
        try:
            jsonschema.validate(data, load_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(map(str, exc.absolute_path)) or "<root>"
            raise SpecError(f"{where}: {exc.message}") from None
        m = data["model"]
        if m["r_minus"] >= m["r_plus"]:
            raise SpecError("model: need r_minus < r_plus")
        if m["type"] == "chain" and m["n"] < 2:
            raise SpecError("model/n: a chain needs n >= 2")
        merged = {k: _merge(v, data.get(k, {})) for k, v in DEFAULTS.items()}
        return cls(command=data["command"], model=copy.deepcopy(m), **merged)

    @classmethod
    def parse(cls, text: str) -> "RunSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunSpec":
        with open(path) as fh:
            return cls.parse(fh.read())

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "model": copy.deepcopy(self.model),
            **{k: copy.deepcopy(getattr(self, k)) for k in DEFAULTS},
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # builders

    def build_model(self):
        m = self.model
        if m["type"] == "globules":
            return GlobuleModel(GlobuleParams(m["n"], m["d"], m["r_minus"], m["r_plus"]))
        return ChainModel(ChainParams(m["n"], m["d"], m["r_minus"], m["r_plus"]))

    def initial(self, model):
        x0 = self.model.get("initial")
        if x0 is None:
            return model.default_initial()
        if len(x0) != model.dim:
            raise SpecError(f"model/initial: expected {model.dim} values, got {len(x0)}")
        return np.asarray(x0, dtype=float)

    def potential(self) -> PairPotential:
        p = self.coefficients["potential"]
        if p["type"] == "zero":
            return PairPotential.zero()
        if "strength" not in p or "width" not in p:
            raise SpecError("coefficients/potential: gaussian needs strength and width")
        return PairPotential.gaussian(p["strength"], p["width"])

    def build_coefficients(self, model) -> SdeCoefficients:
        c = self.coefficients
        if "drift" in c:
            drift = np.asarray(c["drift"], dtype=float)
            if drift.shape != (model.dim,):
                raise SpecError(f"coefficients/drift: expected {model.dim} values")
            return SdeCoefficients(c["sigma"], drift)
        coeffs = gradient_system(self.potential(), model)
        coeffs.sigma = c["sigma"]
        return coeffs

    def config(self, seed=None) -> SimulationConfig:
        n = self.numeric
        return SimulationConfig(n["dt"], n["t_end"], n["seed"] if seed is None else seed, n["stride"])


def atomic_write(path, data: str | bytes):
    """Write through a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(record) -> str:
    """CSV text: ``t``, the coordinate columns, then one column per ledger."""
    header = ["t"] + list(record.names) + [f"L_{cid}" for cid in record.ids]
    table = np.column_stack([record.times, record.states, record.ledger])
    buf = io.StringIO()
    np.savetxt(buf, table, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


def read_trajectory_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
