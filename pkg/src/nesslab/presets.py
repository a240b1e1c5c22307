"""Named model presets addressable by short strings.

Grammar::

    spec   := name [":" params]
    params := key "=" value ("," key "=" value)*

for example ``latgas:N=3,beta=1,J=0.5`` or
``rlc:R1=1,R2=1,L=1,C=1,beta=1,E=0.1``.  ``file:<path>`` loads a jump
model saved with :func:`nesslab.io.save_model_file`.  Unlisted parameters
take the defaults shown by ``ness-lab presets``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .diffusion import DiffusionModel, cell_centres, jump_chain
from .errors import ConfigError, SizeLimitError, UnknownPresetError
from .io import load_model_file, read_edge_values
from .models import (
    LatticeGasSpec,
    RLCSpec,
    lattice_gas_model,
    random_driving,
    random_jump_model,
    ring_model,
    two_block_example,
)

__all__ = [
    "Preset",
    "BuiltModel",
    "PRESETS",
    "parse_spec",
    "build_model",
    "build_driving",
    "describe_presets",
]


@dataclasses.dataclass(frozen=True)
class Preset:
    name: str
    kind: str
    defaults: dict
    description: str


PRESETS = {
    p.name: p
    for p in [
        Preset("ring", "jump", {"n": 3, "beta": 1.0, "eps": 0.1, "gamma": 1.0},
               "uniform ring with unit clockwise driving"),
        Preset("random", "jump", {"n": 4, "seed": 0, "beta": 1.0, "eps": 0.1, "chord": 0.5},
               "random connected model: Gaussian U and F1, uniform activities"),
        Preset("latgas", "latgas",
               {"N": 3, "beta": 1.0, "J": 0.5, "field": 0.0, "eps": 0.1,
                "a_left": 1.0, "a_right": 1.0, "useed": -1},
               "boundary-driven lattice gas on sites -N..0 (useed >= 0: random energy table)"),
        Preset("rlc", "rlc", {"R1": 1.0, "R2": 1.0, "L": 1.0, "C": 1.0, "beta": 1.0, "E": 0.1},
               "noisy RLC circuit driven by the source E"),
        Preset("diffusion", "diffusion",
               {"n_cells": 64, "beta": 1.0, "eps": 0.1, "length": 1.0,
                "chi_amp": 0.3, "u_amp": 0.8, "f_amp": 0.5},
               "periodic diffusion with smooth mobility, potential and force"),
        Preset("twoblock", "coupling", {},
               "two reversible blocks joined by forbidden-transition couplings"),
    ]
}


def _coerce(key, raw, default):
    try:
        if isinstance(default, int) and not isinstance(default, bool):
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        v = float(raw)
    except ValueError as exc:
        raise ConfigError(f"parameter {key}={raw!r} is not a valid number") from exc
    if not math.isfinite(v):
        raise ConfigError(f"parameter {key} must be finite")
    return v


def parse_spec(text, registry=None):
    """Split ``name:k=v,...`` into ``(name, params)`` with defaults filled in."""
    registry = PRESETS if registry is None else registry
    text = text.strip()
    name, _, rest = text.partition(":")
    name = name.strip()
    if name not in registry:
        raise UnknownPresetError(f"unknown preset {name!r}; known: {', '.join(sorted(registry))}")
    defaults = registry[name].defaults
    params = dict(defaults)
    if rest.strip():
        for item in rest.split(","):
            key, eq, raw = item.partition("=")
            key = key.strip()
            if not eq or not key:
                raise ConfigError(f"malformed parameter {item!r} in {text!r}")
            if key not in defaults:
                raise ConfigError(
                    f"preset {name!r} has no parameter {key!r}; allowed: {', '.join(defaults)}"
                )
            params[key] = _coerce(key, raw.strip(), defaults[key])
    return name, params


@dataclasses.dataclass(frozen=True, eq=False)
class BuiltModel:
    """A constructed preset; ``obj`` depends on ``kind``."""

    spec: str
    kind: str
    obj: object

    def jump_model(self):
        """Jump-process view, when one exists."""
        if self.kind == "jump":
            return self.obj
        if self.kind == "latgas":
            return lattice_gas_model(self.obj)
        if self.kind == "diffusion":
            return jump_chain(self.obj)
        raise ConfigError(f"a {self.kind} model has no jump-process form")


def _diffusion(p):
    tp = 2.0 * np.pi / p["length"]
    return DiffusionModel.from_functions(
        lambda x: 1.0 + p["chi_amp"] * np.cos(tp * x),
        lambda x: p["u_amp"] * (np.sin(tp * x) + 0.4 * np.cos(2 * tp * x)),
        lambda x: 1.0 + p["f_amp"] * np.cos(tp * x),
        p["n_cells"], p["beta"], p["eps"], p["length"],
    )


def build_model(text):
    """Construct the model named by ``text``.

    Raises
    ------
    UnknownPresetError, ConfigError, SizeLimitError, ModelError
    """
    if text.strip().startswith("file:"):
        return BuiltModel(text, "jump", load_model_file(text.strip()[5:]))
    name, p = parse_spec(text)
    try:
        if name == "ring":
            obj = ring_model(p["n"], p["beta"], p["eps"], p["gamma"])
        elif name == "random":
            obj = random_jump_model(p["n"], p["seed"], p["beta"], p["eps"], p["chord"])
        elif name == "latgas":
            U = None
            if p["useed"] >= 0:
                U = np.random.default_rng(p["useed"]).normal(size=2 ** (p["N"] + 1))
            obj = LatticeGasSpec(p["N"], p["beta"], p["J"], p["field"], U, None,
                                 p["a_left"], p["a_right"], p["eps"])
        elif name == "rlc":
            obj = RLCSpec(p["R1"], p["R2"], p["L"], p["C"], p["beta"], p["E"])
        elif name == "diffusion":
            obj = _diffusion(p)
        else:
            obj = two_block_example()
    except (ConfigError, SizeLimitError):
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid parameters for {name!r}: {exc}") from exc
    return BuiltModel(text, PRESETS[name].kind, obj)


FIELD_PRESETS = {
    "random": Preset("random", "field", {"seed": 1, "scale": 1.0},
                     "Gaussian antisymmetric driving on the model's edges"),
    "fourier": Preset("fourier", "field",
                      {"c0": 0.0, "c1": 0.0, "s1": 0.0, "c2": 0.0, "s2": 0.0},
                      "diffusion field c0 + sum_k c_k cos(2 pi k x / L) + s_k sin(2 pi k x / L)"),
}


def build_driving(text, built):
    """Driving for response experiments.

    ``model`` takes the model's own ``F1``; ``random:seed=..`` draws one on
    the model's edges; ``file:<path>`` reads ``from,to,value`` lines (jump
    models); ``fourier:c0=..,s1=..`` gives a diffusion force field.
    """
    text = text.strip()
    if built.kind == "diffusion":
        model = built.obj
        if text == "model":
            return np.array(model.F1)
        name, p = parse_spec(text, FIELD_PRESETS)
        if name != "fourier":
            raise ConfigError("diffusion fields must be 'model' or 'fourier:...'")
        x = cell_centres(model.n_cells, model.length)
        tp = 2.0 * np.pi / model.length
        return (p["c0"] + p["c1"] * np.cos(tp * x) + p["s1"] * np.sin(tp * x)
                + p["c2"] * np.cos(2 * tp * x) + p["s2"] * np.sin(2 * tp * x))
    jm = built.jump_model()
    if text == "model":
        return np.array(jm.F1)
    if text.startswith("file:"):
        return read_edge_values(text[5:], jm.n_states)
    name, p = parse_spec(text, FIELD_PRESETS)
    if name != "random":
        raise ConfigError("jump-model drivings must be 'model', 'random:...' or 'file:...'")
    rng = np.random.default_rng(p["seed"])
    return random_driving(jm.n_states, rng, support=jm.gamma > 0, scale=p["scale"])


def describe_presets():
    lines = []
    for reg, title in ((PRESETS, "models"), (FIELD_PRESETS, "drivings")):
        lines.append(f"{title}:")
        for p in reg.values():
            params = ",".join(f"{k}={v}" for k, v in p.defaults.items())
            spec = f"{p.name}:{params}" if params else p.name
            lines.append(f"  {spec}")
            lines.append(f"      {p.description}")
    lines.append("  model")
    lines.append("      the model's own driving F1")
    lines.append("  file:<path>")
    lines.append("      jump model (.npz) or edge values (from,to,value lines)")
    return "\n".join(lines)
