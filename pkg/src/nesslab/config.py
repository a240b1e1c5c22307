"""Experiment configuration files.

A configuration is an INI file with one section per experiment::

    [ring-limits]
    experiment = limit-exchange
    model = ring:n=3,eps=0.1
    eps_grid = 0.1, 0.01, 0.001
    T_grid = 5/gap, 20/gap, 40/gap

Keys shared by all sections may go in ``[DEFAULT]``.  ``T_grid`` entries
are times or multiples of the inverse spectral gap written ``k/gap``.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
import re
from pathlib import Path

from .errors import ConfigError, SizeLimitError, UnknownPresetError
from .presets import build_driving, build_model

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "Diagnostic",
    "TimeSpec",
    "parse_config",
    "load_config",
    "validate",
    "EXIT_OK",
    "EXIT_CONTRACT",
    "EXIT_CONFIG",
    "EXIT_PRESET",
    "EXIT_SIZE",
]

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_CONFIG = 2
EXIT_PRESET = 3
EXIT_SIZE = 4


@dataclasses.dataclass(frozen=True)
class ExperimentKind:
    models: tuple
    sampling: bool
    uses_eps: bool
    uses_T: bool


_JUMPLIKE = ("jump", "latgas", "diffusion")

EXPERIMENTS = {
    "limit-exchange": ExperimentKind(_JUMPLIKE, False, True, True),
    "mclennan-vs-exact": ExperimentKind(_JUMPLIKE, False, True, False),
    "fluctuation-symmetry": ExperimentKind(_JUMPLIKE, True, False, True),
    "dent-norm": ExperimentKind(_JUMPLIKE, True, False, True),
    "green-kubo": ExperimentKind(("jump", "latgas", "diffusion"), True, False, True),
    "los-identity": ExperimentKind(("latgas",), False, False, False),
    "local-equilibrium": ExperimentKind(("latgas",), False, False, False),
    "rlc-check": ExperimentKind(("rlc",), True, False, False),
    "transient-excess": ExperimentKind(_JUMPLIKE, False, True, True),
}

KEYS = {
    "experiment", "model", "eps_grid", "T_grid", "n_samples", "seed", "dt",
    "output", "tolerance", "F1", "G1",
}

_TIME_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*(/\s*gap)?\s*$")


@dataclasses.dataclass(frozen=True)
class TimeSpec:
    """A horizon, absolute or as a multiple of ``1 / gap``."""

    value: float
    per_gap: bool

    @classmethod
    def parse(cls, text):
        m = _TIME_RE.match(text)
        if m is None:
            raise ConfigError(f"invalid time {text!r}; use a number or 'k/gap'")
        try:
            v = float(m.group(1))
        except ValueError as exc:
            raise ConfigError(f"invalid time {text!r}") from exc
        if not (math.isfinite(v) and v >= 0):
            raise ConfigError(f"time {text!r} must be finite and nonnegative")
        return cls(v, m.group(2) is not None)

    def resolve(self, gap):
        return self.value / gap if self.per_gap else self.value

    def __str__(self):
        return f"{self.value!r}/gap" if self.per_gap else repr(self.value)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One validated-or-not experiment section."""

    name: str
    experiment: str
    model: str
    eps_grid: tuple | None = None
    T_grid: tuple | None = None
    n_samples: int | None = None
    seed: int | None = None
    dt: float | None = None
    output: str | None = None
    tolerance: float | None = None
    F1: str = "model"
    G1: str = "random:seed=1"
    raw: tuple = ()

    def output_dir(self, override=None):
        if override:
            return Path(override)
        if self.output:
            return Path(self.output)
        return Path(os.environ.get("NESSLAB_OUTPUT_DIR", "."))


@dataclasses.dataclass(frozen=True)
class Diagnostic:
    section: str
    message: str
    code: int = EXIT_CONFIG

    def __str__(self):
        return f"[{self.section}] {self.message}" if self.section else self.message


def _split_list(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def parse_config(text, source="<config>"):
    """Parse INI text into configs plus syntax diagnostics."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        return [], [Diagnostic("", f"cannot parse {source}: {exc}".splitlines()[0])]
    configs, diags = [], []
    if not cp.sections():
        diags.append(Diagnostic("", "configuration has no experiment sections"))
    for name in cp.sections():
        sec = cp[name]
        unknown = sorted(set(sec) - KEYS)
        for key in unknown:
            diags.append(Diagnostic(name, f"unknown key {key!r}"))
        for key in ("experiment", "model"):
            if key not in sec or not sec[key].strip():
                diags.append(Diagnostic(name, f"missing required key {key!r}"))
        if any(d.section == name for d in diags):
            continue
        kw = {"raw": tuple((k, sec[k]) for k in sorted(sec))}
        try:
            if "eps_grid" in sec:
                kw["eps_grid"] = tuple(float(v) for v in _split_list(sec["eps_grid"]))
            if "T_grid" in sec:
                kw["T_grid"] = tuple(TimeSpec.parse(v) for v in _split_list(sec["T_grid"]))
            if "n_samples" in sec:
                kw["n_samples"] = int(sec["n_samples"])
            if "seed" in sec:
                kw["seed"] = int(sec["seed"])
            if "dt" in sec:
                kw["dt"] = float(sec["dt"])
            if "tolerance" in sec:
                kw["tolerance"] = float(sec["tolerance"])
        except (ValueError, ConfigError) as exc:
            diags.append(Diagnostic(name, f"invalid value: {exc}"))
            continue
        for key in ("output", "F1", "G1"):
            if key in sec:
                kw[key] = sec[key].strip()
        configs.append(
            ExperimentConfig(name, sec["experiment"].strip(), sec["model"].strip(), **kw)
        )
    return configs, diags


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        return [], [Diagnostic("", f"cannot read {path}: {exc.strerror}")]
    return parse_config(text, source=str(p))


def _check_section(cfg):
    out = []

    def bad(msg, code=EXIT_CONFIG):
        out.append(Diagnostic(cfg.name, msg, code))

    kind = EXPERIMENTS.get(cfg.experiment)
    if kind is None:
        bad(f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        return out
    try:
        built = build_model(cfg.model)
    except UnknownPresetError as exc:
        bad(str(exc), EXIT_PRESET)
        return out
    except SizeLimitError as exc:
        bad(f"size limit: {exc}", EXIT_SIZE)
        return out
    except (ConfigError, ValueError) as exc:
        bad(f"invalid model: {exc}")
        return out
    if built.kind not in kind.models:
        bad(f"experiment {cfg.experiment!r} needs a model of kind "
            f"{' or '.join(kind.models)}, got {built.kind!r}")
    if cfg.eps_grid is not None:
        if kind.uses_eps and not cfg.eps_grid:
            bad("eps_grid must be nonempty")
        if any(not (math.isfinite(e) and e > 0) for e in cfg.eps_grid):
            bad("eps_grid values must be positive and finite")
    if cfg.T_grid is not None:
        if kind.uses_T and not cfg.T_grid:
            bad("T_grid must be nonempty")
        if cfg.experiment == "green-kubo" and any(t.value == 0 for t in cfg.T_grid):
            bad("T_grid values must be positive")
    if kind.sampling:
        if cfg.seed is None:
            bad("seed is required for sampling experiments")
        elif not 0 <= cfg.seed < 2**64:
            bad("seed must be a 64-bit unsigned integer")
        if cfg.n_samples is not None and cfg.n_samples < 2:
            bad("n_samples must be at least 2")
    if cfg.dt is not None and not (math.isfinite(cfg.dt) and cfg.dt > 0):
        bad("dt must be positive")
    if cfg.tolerance is not None and not cfg.tolerance > 0:
        bad("tolerance must be positive")
    if cfg.experiment == "green-kubo" and built.kind in kind.models:
        for key in ("F1", "G1"):
            try:
                build_driving(getattr(cfg, key), built)
            except UnknownPresetError as exc:
                bad(f"{key}: {exc}", EXIT_PRESET)
            except (ConfigError, ValueError, OSError) as exc:
                bad(f"{key}: {exc}")
    return out


def validate(configs):
    """All violations across ``configs``; an empty list means valid.

    Accepts a list of :class:`ExperimentConfig` or a path to a file.
    """
    diags = []
    if isinstance(configs, (str, Path)):
        configs, diags = load_config(configs)
    names = [c.name for c in configs]
    for c in configs:
        diags.extend(_check_section(c))
    dup = sorted({n for n in names if names.count(n) > 1})
    diags.extend(Diagnostic(n, "duplicate section") for n in dup)
    return diags


def exit_code_for(diags):
    """Exit code for a failed validation: generic problems win over unknown presets, which win over size limits."""
    codes = {d.code for d in diags}
    if EXIT_CONFIG in codes:
        return EXIT_CONFIG
    if EXIT_PRESET in codes:
        return EXIT_PRESET
    if EXIT_SIZE in codes:
        return EXIT_SIZE
    return EXIT_OK
