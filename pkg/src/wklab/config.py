"""Sectioned run configuration: parse, validate, echo.

The file is INI-style (stdlib :mod:`configparser`) with sections
[solver] [data] [weights] [experiment] [output].  Unknown sections or keys
and malformed values are rejected with line/column positions.  Numbers
must be plain decimal literals; lists are comma separated.
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .experiments import ExperimentConfig, WeightParams
from .solver import InitialDataSpec, SolverConfig

_FLOAT = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_INT = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int = 0, column: int = 0):
        super().__init__(f"{source}:{line}:{column}: {message}")
        self.source = source
        self.line = line
        self.column = column


def _parse_float(text):
    if not _FLOAT.match(text):
        raise ValueError(f"expected a decimal number, got {text!r}")
    return float(text)


def _parse_int(text):
    if not _INT.match(text):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(text)


def _parse_floats(text):
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(_parse_float(s) for s in items)


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_str(text):
    return text


def _fmt_float(x):
    return repr(float(x))


def _fmt_floats(xs):
    return ", ".join(repr(float(x)) for x in xs)


_D_SOLVER = SolverConfig()
_D_DATA = InitialDataSpec()
_D_WEIGHTS = WeightParams()
_D_EXP = ExperimentConfig()

# section -> key -> (parser, formatter, default, help)
SCHEMA = {
    "solver": {
        "dx": (_parse_float, _fmt_float, _D_SOLVER.dx, "grid spacing in the uniform coordinate"),
        "dt": (_parse_float, _fmt_float, _D_SOLVER.dt, "time step (dt <= 0.9 dx)"),
        "half_extent": (_parse_float, _fmt_float, _D_SOLVER.half_extent,
                        "X_max; must be >= t_final + data support + 2"),
        "t_final": (_parse_float, _fmt_float, _D_SOLVER.t_final, "final time"),
        "observe_every": (_parse_int, str, _D_SOLVER.observe_every, "diagnostic cadence in steps"),
        "coordinate": (_parse_str, str, _D_SOLVER.coordinate, "r_uniform | x_uniform"),
        "boundary": (_parse_str, str, _D_SOLVER.boundary, "dirichlet_vacuum"),
        "blowup_cap": (_parse_float, _fmt_float, _D_SOLVER.blowup_cap, "abort when max|v| exceeds this"),
    },
    "data": {
        "family": (_parse_str, str, _D_DATA.family,
                   "odd_gaussian_bump | odd_velocity_bump | custom_table"),
        "amplitude": (_parse_float, _fmt_float, _D_DATA.amplitude, "reference amplitude delta"),
        "width": (_parse_float, _fmt_float, _D_DATA.width, "Gaussian width in x"),
        "center_offset": (_parse_float, _fmt_float, _D_DATA.center_offset, "bump centres at +-offset"),
        "table": (_parse_str, str, "", "CSV file x,v1,v2 for custom_table (relative to the config)"),
    },
    "weights": {
        "A": (_parse_float, _fmt_float, _D_WEIGHTS.A, "scale of Phi_A and sigma_A"),
        "B": (_parse_float, _fmt_float, _D_WEIGHTS.B, "scale of Phi_B and sigma_B"),
        "K": (_parse_float, _fmt_float, _D_WEIGHTS.K, "scale of rho_K; must exceed sqrt(9/5)"),
        "eps": (_parse_float, _fmt_float, _D_WEIGHTS.eps, "smoothing parameter of X_eps"),
    },
    "experiment": {
        "R_list": (_parse_floats, _fmt_floats, _D_EXP.R_list, "local-energy radii"),
        "delta_list": (_parse_floats, _fmt_floats, _D_EXP.delta_list, "amplitude sweep (sorted)"),
        "seed": (_parse_int, str, _D_EXP.seed, "random seed (also --seed, WKLAB_SEED)"),
        "window": (_parse_float, _fmt_float, _D_EXP.window, "time window for trend averages"),
        "lemma_trials": (_parse_int, str, _D_EXP.lemma_trials, "random fields per lemma check"),
        "lemma_spacings": (_parse_floats, _fmt_floats, _D_EXP.lemma_spacings, "lemma grid spacings"),
        "lemma_eps": (_parse_floats, _fmt_floats, _D_EXP.lemma_eps, "lemma eps values"),
        "xeps_eps": (_parse_floats, _fmt_floats, _D_EXP.xeps_eps, "eps values for the X_eps bounds"),
        "spectrum_domain": (_parse_float, _fmt_float, _D_EXP.spectrum_domain,
                            "half-width of the eigenvalue domain"),
        "spectrum_n": (_parse_int, str, _D_EXP.spectrum_n, "intervals across the eigenvalue domain"),
    },
    "output": {
        "path": (_parse_str, str, _D_EXP.output_path, "output directory"),
        "plots": (_parse_bool, lambda b: "true" if b else "false", True, "write SVG plots"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    plots: bool = True
    table: str = ""
    seed_in_file: bool = field(default=False, compare=False)


def schema_text() -> str:
    lines = ["configuration file schema (INI sections; unknown keys are errors):"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, (_, fmt, default, help_) in keys.items():
            shown = fmt(default) if default != "" else '""'
            lines.append(f"    {key + ' = ' + shown:<38} {help_}")
    return "\n".join(lines)


def _positions(text: str) -> dict:
    """(section, key) -> (line, key column, value column); (section, None) -> header line."""
    pos = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.match(r"^\s*\[([^\]]*)\]", raw)
        if m:
            section = m.group(1).strip()
            pos.setdefault((section, None), (lineno, raw.index("[") + 1, raw.index("[") + 1))
            continue
        m = re.match(r"^(\s*)([^=:]+?)\s*[=:]\s*", raw)
        if m and section is not None:
            pos.setdefault((section, m.group(2)), (lineno, len(m.group(1)) + 1, m.end() + 1))
    return pos


def parse_config(text: str, source: str = "<config>", base_dir: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", source, exc.lineno, 1) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", source, exc.lineno or 0, 1) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", source,
                          exc.lineno or 0, 1) from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"cannot parse line {line!r}", source, lineno, 1) from exc
    pos = _positions(text)

    values = {s: {} for s in SCHEMA}
    for section in parser.sections():
        if section not in SCHEMA:
            line, col, _ = pos.get((section, None), (0, 0, 0))
            raise ConfigError(f"unknown section [{section}]", source, line, col)
        for key, raw in parser.items(section):
            line, col, vcol = pos.get((section, key), (0, 0, 0))
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", source, line, col)
            try:
                values[section][key] = SCHEMA[section][key][0](raw.strip())
            except ValueError as exc:
                raise ConfigError(str(exc), source, line, vcol) from exc

    def build(section, fn):
        try:
            return fn(**values[section])
        except (TypeError, ValueError) as exc:
            keys = list(values[section])
            line, col, _ = pos.get((section, keys[0]) if keys else (section, None), (0, 0, 0))
            raise ConfigError(f"[{section}] {exc}", source, line, col) from exc

    solver_cfg = build("solver", SolverConfig)
    data_kw = dict(values["data"])
    table_path = data_kw.pop("table", "")
    table = None
    if table_path:
        full = table_path if os.path.isabs(table_path) else os.path.join(base_dir or ".", table_path)
        try:
            arr = np.loadtxt(full, delimiter=",", ndmin=2, comments="#")
            table = (arr[:, 0], arr[:, 1], arr[:, 2])
        except (OSError, ValueError, IndexError) as exc:
            line, _, vcol = pos.get(("data", "table"), (0, 0, 0))
            raise ConfigError(f"cannot read table {full!r}: {exc}", source, line, vcol) from exc
    values["data"] = dict(data_kw, table=table) if table is not None else data_kw
    data = build("data", InitialDataSpec)
    weights = build("weights", WeightParams)
    exp_kw = dict(values["experiment"])
    out = values["output"]
    values["experiment"] = exp_kw
    experiment = build("experiment", lambda **kw: ExperimentConfig(
        solver=solver_cfg, data=data, weights=weights, output_path=out.get("path", _D_EXP.output_path),
        **kw))
    return RunConfig(experiment, out.get("plots", True), table_path, "seed" in exp_kw)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path, 0, 0) from exc
    return parse_config(text, path, os.path.dirname(os.path.abspath(path)))


def echo_config(cfg: RunConfig) -> str:
    """Canonical text form; parsing it gives back an equal RunConfig."""
    exp = cfg.experiment
    current = {
        "solver": {f.name: getattr(exp.solver, f.name) for f in fields(exp.solver)},
        "data": {"family": exp.data.family, "amplitude": exp.data.amplitude, "width": exp.data.width,
                 "center_offset": exp.data.center_offset, "table": cfg.table},
        "weights": {f.name: getattr(exp.weights, f.name) for f in fields(exp.weights)},
        "experiment": {k: getattr(exp, k) for k in SCHEMA["experiment"]},
        "output": {"path": exp.output_path, "plots": cfg.plots},
    }
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, fmt, _, _) in keys.items():
            value = current[section][key]
            if key == "table" and not value:
                continue
            lines.append(f"{key} = {fmt(value)}")
        lines.append("")
    return "\n".join(lines)


def with_overrides(cfg: RunConfig, seed: int | None = None, output: str | None = None,
                   plots: bool | None = None) -> RunConfig:
    exp = cfg.experiment
    if seed is not None:
        exp = replace(exp, seed=seed)
    if output is not None:
        exp = replace(exp, output_path=output)
    return replace(cfg, experiment=exp, plots=cfg.plots if plots is None else plots)
