"""Scenario files: a JSON tree validated against a fixed schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .errors import ConfigurationError
from .grid import PhaseGrid, maxwellian_norm
from .restitution import model_from_dict

_POS = {"type": "number", "exclusiveMinimum": 0}
_COUNT = {"type": "integer", "minimum": 4}

SCHEMA = {
    "type": "object",
    "required": ["n", "grid", "alpha", "beta", "initial", "model", "time"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "n": {"enum": [2, 3]},
        "grid": {
            "type": "object",
            "required": ["Lx", "Lv", "Nx", "Nv"],
            "additionalProperties": False,
            "properties": {"Lx": _POS, "Lv": _POS, "Nx": _COUNT, "Nv": _COUNT},
        },
        "alpha": _POS,
        "beta": _POS,
        "initial": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["vacuum", "maxwellian", "double_maxwellian"]},
                "amplitude": {"type": "number", "minimum": 0},
                "threshold_fraction": {"type": "number", "minimum": 0},
                "alpha": _POS,
                "beta": _POS,
                "shift": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3},
            },
        },
        "model": {"type": "object", "required": ["kind"]},
        "time": {
            "type": "object",
            "required": ["T", "Nt"],
            "additionalProperties": False,
            "properties": {"T": _POS, "Nt": {"type": "integer", "minimum": 2}},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": _POS,
                "max_iter": {"type": "integer", "minimum": 1},
                "scheme": {"enum": ["conservative", "interpolated"]},
                "n_ang": {"type": "integer", "minimum": 4},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "snapshots": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "format": {"enum": ["bin", "csv"]},
                "weak_residual": {"type": "boolean"},
            },
        },
        "override_threshold": {"type": "boolean"},
    },
}


@dataclass
class Scenario:
    n: int
    grid: PhaseGrid
    alpha: float
    beta: float
    initial: dict
    model_block: dict
    T: float
    Nt: int
    tol: float = 1e-6
    max_iter: int = 30
    scheme: str = "conservative"
    n_ang: int | None = None
    workers: int = 1
    out_dir: str = "run"
    snapshots: list = field(default_factory=list)
    snapshot_format: str = "bin"
    weak_residual: bool = True
    override_threshold: bool = False
    name: str = "scenario"

    @property
    def model(self):
        return model_from_dict(self.model_block)

    def datum_shape(self):
        """Initial datum before amplitude scaling, flattened on the grid."""
        g = self.grid
        kind = self.initial["kind"]
        if kind == "vacuum":
            return np.zeros((g.NX, g.NV))
        a = float(self.initial.get("alpha", self.alpha))
        b = float(self.initial.get("beta", self.beta))
        space = np.exp(-a * g.x_sq)[:, None]
        if kind == "maxwellian":
            return space * np.exp(-b * g.v_sq)[None, :]
        s = np.asarray(self.initial.get("shift", [1.0] + [0.0] * (self.n - 1)), float)
        if s.size != self.n:
            raise ConfigurationError(f"initial.shift needs {self.n} components")
        v = g.v_points
        lobes = np.exp(-b * np.sum((v - s) ** 2, axis=1)) + np.exp(-b * np.sum((v + s) ** 2, axis=1))
        return space * (0.5 * lobes)[None, :]

    def initial_datum(self, k):
        """f0 on the grid; ``threshold_fraction`` sets ||f0||_{alpha,beta} to that fraction of 1/(4k)."""
        shape = self.datum_shape()
        if self.initial["kind"] == "vacuum":
            return shape
        if "threshold_fraction" in self.initial:
            norm = maxwellian_norm(shape, self.grid, self.alpha, self.beta)
            if not np.isfinite(norm) or norm == 0:
                raise ConfigurationError("initial datum has no finite nonzero weighted norm")
            return shape * (float(self.initial["threshold_fraction"]) / (4.0 * k) / norm)
        return shape * float(self.initial.get("amplitude", 1.0))


def _path(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def scenario_from_dict(data):
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigurationError(f"scenario invalid at {_path(err)}: {err.message}") from None
    init = data["initial"]
    if init["kind"] != "vacuum" and ("amplitude" in init) == ("threshold_fraction" in init):
        raise ConfigurationError("initial: give exactly one of 'amplitude' or 'threshold_fraction'")
    model_from_dict(data["model"])  # validate early
    gd = data["grid"]
    grid = PhaseGrid(data["n"], float(gd["Lx"]), float(gd["Lv"]), int(gd["Nx"]), int(gd["Nv"]))
    solver = data.get("solver", {})
    out = data.get("output", {})
    return Scenario(
        n=data["n"],
        grid=grid,
        alpha=float(data["alpha"]),
        beta=float(data["beta"]),
        initial=dict(init),
        model_block=dict(data["model"]),
        T=float(data["time"]["T"]),
        Nt=int(data["time"]["Nt"]),
        tol=float(solver.get("tol", 1e-6)),
        max_iter=int(solver.get("max_iter", 30)),
        scheme=solver.get("scheme", "conservative"),
        n_ang=solver.get("n_ang"),
        workers=int(solver.get("workers", 1)),
        out_dir=out.get("dir", "run"),
        snapshots=[float(t) for t in out.get("snapshots", [])],
        snapshot_format=out.get("format", "bin"),
        weak_residual=bool(out.get("weak_residual", True)),
        override_threshold=bool(data.get("override_threshold", False)),
        name=data.get("name", "scenario"),
    )


def load_scenario(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigurationError(f"cannot read scenario {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"{path}: malformed JSON at line {err.lineno} column {err.colno}: {err.msg}") from None
    return scenario_from_dict(data)


def reference_scenario_path(name="reference"):
    return str(resources.files("inelastic_ks") / "scenarios" / f"{name}.json")
