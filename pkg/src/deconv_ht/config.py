"""Run configuration files.

A config is an INI-style document of ``key = value`` lines grouped in
sections. Keys are case-insensitive; lists are comma-separated. Unknown
sections or keys are rejected. Recognised keys::

    [kernel]
    variant = truncated_geometric     ; or shifted_binomial
    m0 = 4                            ; attempt cap (truncated_geometric)
    n = 3                             ; prior attempts (shifted_binomial)
    grid_start = 0.1
    grid_step = 0.02
    grid_end = 1.0
    parametrization = p_tilde         ; or p_star (truncated_geometric only)

    [population]
    N = 100000
    I = 10000

    [fit]
    method = moments                  ; or mle
    covariance_model = eb             ; or cd
    mle_iterations = 2
    report_threshold = 1e-6
    joint = false                     ; couple groups through I

    [simulate]
    family = 2points, unif, norm
    alpha = 0.1, 0.2, 0.3, 0.4
    m0 = 4, 5, 6, 7
    I = 10000
    pr1 = 0.5
    reps = 1000
    seed = 0
    normal_group1 = censor            ; or truncate

    [calibration]
    <covariate value> = <population proportion>

    [bootstrap]
    K = 200
    seed = 0

    [output]
    format = csv                      ; or text
    path = results.csv
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .deconvolve import FitConfig
from .estimators import PopulationFrame
from .kernels import Grid, ShiftedBinomial, TruncatedGeometric, default_grid

__all__ = ["ConfigError", "RunConfig", "SimulateSection", "load_config", "parse_config"]

_SCHEMA = {
    "kernel": {"variant", "m0", "n", "grid_start", "grid_step", "grid_end", "parametrization"},
    "population": {"n", "i"},
    "fit": {"method", "covariance_model", "mle_iterations", "report_threshold", "joint"},
    "simulate": {"family", "alpha", "m0", "i", "pr1", "reps", "seed", "normal_group1"},
    "calibration": None,  # free keys: covariate values
    "bootstrap": {"k", "seed"},
    "output": {"format", "path"},
}


class ConfigError(ValueError):
    pass


@dataclass
class SimulateSection:
    families: list = field(default_factory=lambda: ["2points", "unif", "norm"])
    alphas: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4])
    m0s: list = field(default_factory=lambda: [4, 5, 6, 7])
    I: int = 10000
    pr1: float = 0.5
    reps: int = 1000
    seed: int = 0
    normal_group1: str = "censor"


@dataclass
class RunConfig:
    kernel: object
    grid: Grid
    fit: FitConfig
    joint: bool = False
    frame: PopulationFrame | None = None
    simulate: SimulateSection = field(default_factory=SimulateSection)
    calibration: dict = field(default_factory=dict)
    bootstrap_K: int = 200
    bootstrap_seed: int = 0
    output_format: str = "csv"
    output_path: str | None = None
    grid_explicit: bool = False


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[(.+)\]", stripped)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None:
            k = re.split(r"[=:]", stripped, maxsplit=1)[0].strip()
            if k.lower() == key.lower():
                return no
    return None


def _where(text, section, key=None):
    no = _line_of(text, section, key)
    loc = f"[{section}]" + (f" {key}" if key else "")
    return f"line {no}: {loc}" if no else loc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # calibration keys are data labels; fold case below instead
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    sections: dict[str, dict[str, str]] = {}
    for sec in parser.sections():
        name = sec.lower()
        if name not in _SCHEMA:
            raise ConfigError(f"{source}: {_where(text, name)}: unknown section")
        if name in sections:
            raise ConfigError(f"{source}: {_where(text, name)}: duplicate section")
        allowed = _SCHEMA[name]
        body = sections[name] = {}
        for key, raw in parser[sec].items():
            norm = key if allowed is None else key.lower()
            if allowed is not None and norm not in allowed:
                raise ConfigError(f"{source}: {_where(text, name, norm)}: unknown key")
            if norm in body:
                raise ConfigError(f"{source}: {_where(text, name, norm)}: duplicate key")
            body[norm] = raw

    def get(sec, key, conv, default=None):
        if key not in sections.get(sec, {}):
            return default
        raw = sections[sec][key]
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: {_where(text, sec, key)}: bad value {raw!r} ({exc})") from exc

    def listof(conv):
        return lambda raw: [conv(v.strip()) for v in raw.split(",") if v.strip()]

    def boolean(raw):
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")

    def integer(raw):
        v = float(raw)
        if v != int(v):
            raise ValueError("expected an integer")
        return int(v)

    try:
        variant = get("kernel", "variant", str.strip, "truncated_geometric")
        if variant == "truncated_geometric":
            kernel = TruncatedGeometric(get("kernel", "m0", integer, 4),
                                        get("kernel", "parametrization", str.strip, "p_tilde"))
        elif variant == "shifted_binomial":
            kernel = ShiftedBinomial(get("kernel", "n", integer, 3))
        else:
            raise ConfigError(f"{source}: {_where(text, 'kernel', 'variant')}: unknown variant {variant!r}")
        keys = ("grid_start", "grid_step", "grid_end")
        given = [get("kernel", k, float) for k in keys]
        if any(v is not None for v in given):
            if any(v is None for v in given):
                raise ConfigError(f"{source}: [kernel]: grid_start, grid_step and grid_end go together")
            try:
                grid = Grid.arange(*given)
            except ValueError as exc:
                raise ConfigError(f"{source}: {_where(text, 'kernel', 'grid_start')}: {exc}") from exc
        else:
            grid = default_grid(kernel)

        fit = FitConfig(
            method=get("fit", "method", str.strip, "moments"),
            covariance_model=get("fit", "covariance_model", str.strip, "eb"),
            mle_iterations=get("fit", "mle_iterations", integer, 2),
            report_threshold=get("fit", "report_threshold", float, 1e-6),
        )
        N = get("population", "n", float)
        I = get("population", "i", float)
        frame = None
        if I is not None or N is not None:
            frame = PopulationFrame(N if N is not None else I, I if I is not None else N)

        defaults = SimulateSection()
        sim = SimulateSection(
            families=get("simulate", "family", listof(str), defaults.families),
            alphas=get("simulate", "alpha", listof(float), defaults.alphas),
            m0s=get("simulate", "m0", listof(integer), defaults.m0s),
            I=get("simulate", "i", integer, defaults.I),
            pr1=get("simulate", "pr1", float, defaults.pr1),
            reps=get("simulate", "reps", integer, defaults.reps),
            seed=get("simulate", "seed", integer, defaults.seed),
            normal_group1=get("simulate", "normal_group1", str.strip, defaults.normal_group1),
        )
        if sim.reps < 1:
            raise ConfigError(f"{source}: {_where(text, 'simulate', 'reps')}: reps must be >= 1")
        calibration = {}
        if "calibration" in sections:
            for key in sections["calibration"]:
                calibration[key] = get("calibration", key, float)
                if not 0 < calibration[key] < 1:
                    raise ConfigError(f"{source}: {_where(text, 'calibration', key)}: proportion must be in (0, 1)")
        K = get("bootstrap", "k", integer, 200)
        if K < 1:
            raise ConfigError(f"{source}: {_where(text, 'bootstrap', 'k')}: K must be >= 1")
        fmt = get("output", "format", str.strip, "csv")
        if fmt not in ("csv", "text"):
            raise ConfigError(f"{source}: {_where(text, 'output', 'format')}: format must be csv or text")
        return RunConfig(
            kernel=kernel, grid=grid, fit=fit, joint=get("fit", "joint", boolean, False),
            frame=frame, simulate=sim, calibration=calibration, bootstrap_K=K,
            bootstrap_seed=get("bootstrap", "seed", integer, 0), output_format=fmt,
            output_path=get("output", "path", str.strip), grid_explicit=given[0] is not None,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
