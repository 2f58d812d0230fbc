"""Configuration, snapshot files, scenario pipelines and the command line.

Configuration files are line oriented::

    # comment
    [problem]
    N = 1
    p = 3

Keys before the first section header are looked up in ``[run]`` and
``[problem]`` first, then in whichever section defines them uniquely.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import struct
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import similarity as sim
from . import special_solutions as ss
from .core import (
    BOUNDARIES,
    GEOMETRIES,
    INITIAL_FAMILIES,
    ConfigurationError,
    InitialData,
    ProblemSpec,
    Snapshot,
    derive_exponents,
    make_grid,
)
from .physical_solver import StepControl, solve_until_blowup

log = logging.getLogger(__name__)

SCENARIOS = ("simulate", "similarity", "profile", "semigroup", "bubble", "diagnose")
OUT_DIR_ENV = "BLOWUPLAB_OUT_DIR"

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_CHECK_FAILED = 2


# ----------------------------------------------------------------------------
# configuration


def _floats(text: str) -> tuple[float, ...]:
    parts = [x.strip() for x in text.split(",") if x.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(x) for x in parts)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


_CONTROL = StepControl()

# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "scenario": (_choice(*SCENARIOS), None),
        "seed": (int, 0),
        "format": (_choice("csv", "json", "both"), "both"),
        "svg": (_bool, False),
    },
    "problem": {
        "N": (int, 1),
        "p": (float, 3.0),
        "geometry": (_choice(*GEOMETRIES), "interval"),
        "R": (float, 4.0),
        "boundary": (_choice(*BOUNDARIES), "dirichlet"),
    },
    "initial": {
        "family": (_choice(*INITIAL_FAMILIES), "gaussian"),
        "amplitude": (float, 5.0),
        "width": (float, 1.0),
        "center": (float, 0.0),
        "separation": (float, 1.5),
        "c": (float, 1.0),
        "lambda": (float, 1.0),
        "values": (_floats, ()),
    },
    "grid": {"node_count": (int, 401)},
    "control": {
        "cfl_safety": (float, _CONTROL.cfl_safety),
        "ode_safety": (float, _CONTROL.ode_safety),
        "u_max": (float, _CONTROL.u_max),
        "dt_min": (float, _CONTROL.dt_min),
        "t_final": (float, _CONTROL.t_final),
        "trace_growth": (float, _CONTROL.trace_growth),
        "fit_window": (int, 40),
    },
    "similarity": {
        "center": (float, 0.0),
        "Y_max": (float, 12.0),
        "y_nodes": (int, 2401),
        "frames": (int, 5),
        "decades": (float, 1.0),
    },
    "diagnostics": {
        "k": (float, 3.0),
        "decay_center": (float, 2.0),
        "decay_q": (_opt_float, None),
        "R_far": (float, 2.0),
        "ratio": (float, 10.0),
        "window": (float, 2.0),
        "m_tolerance": (float, 0.05),
        "concentration_tolerance": (float, 0.10),
        "identity_tolerance": (float, 1e-6),
    },
    "profile": {
        "alpha_min": (_opt_float, None),
        "alpha_max": (float, 10.0),
        "step": (float, 0.05),
        "R_max": (float, 30.0),
        "G_max": (float, 1e3),
        "bisection_tolerance": (float, 1e-13),
        "tail_tolerance": (float, 0.10),
        "min_correlation": (float, 0.99),
    },
    "semigroup": {
        "functions": (int, 100),
        "s_values": (_floats, (0.1, 1.0, 5.0)),
        "q_values": (_floats, (1.0, 2.0, 4.0)),
        "Y_max": (float, 12.0),
        "nodes": (int, 1201),
        "tolerance": (float, 1e-6),
        "oracle_tolerance": (float, 1e-8),
        "scan_q": (float, 2.0),
        "scan_b_max": (float, 6.0),
        "scan_b_count": (int, 25),
        "scan_s": (_floats, (0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0)),
        "scan_width": (float, 0.05),
    },
    "bubble": {
        "N": (int, 4),
        "lambdas": (_floats, (0.1, 1.0, 10.0)),
        "h": (float, 1e-3),
        "r_max": (float, 10.0),
        "tolerance": (float, 1e-6),
        "residual_tolerance": (float, 1e-5),
    },
}

REQUIRED = ("run.scenario",)


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]]
    out_dir: Path | None = None
    # dotted key -> where it was set ("line 3" or "--set ...")
    lines: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, dotted: str):
        section, key = dotted.split(".")
        return self.values[section][key]

    @property
    def scenario(self) -> str | None:
        return self.values["run"]["scenario"]

    @property
    def seed(self) -> int:
        return int(self.values["run"]["seed"])

    def problem_spec(self) -> ProblemSpec:
        pr = self.values["problem"]
        ini = self.values["initial"]
        params = {k: ini[k] for k in ("amplitude", "width", "center", "separation", "c", "lambda")}
        table = tuple(ini["values"]) or None
        try:
            initial = InitialData(ini["family"], params, table)
            return ProblemSpec(pr["N"], pr["p"], pr["geometry"], pr["R"], pr["boundary"], initial)
        except ValueError as exc:
            raise ConfigurationError(self._cite(str(exc))) from exc

    def step_control(self) -> StepControl:
        c = self.values["control"]
        try:
            return StepControl(
                cfl_safety=c["cfl_safety"], ode_safety=c["ode_safety"], u_max=c["u_max"],
                dt_min=c["dt_min"], t_final=c["t_final"], trace_growth=c["trace_growth"],
            )
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    def _cite(self, message: str) -> str:
        for key, line in self.lines.items():
            name = key.split(".")[1]
            if message.startswith(f"{name} ") or f" {name} " in message:
                return f"{line}: {message}"
        return message

    def as_dict(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}


def _resolve_bare(key: str, lineno: int) -> str:
    for section in ("run", "problem"):
        if key in SCHEMA[section]:
            return section
    owners = [s for s, keys in SCHEMA.items() if key in keys]
    if len(owners) == 1:
        return owners[0]
    if not owners:
        raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
    raise ConfigurationError(
        f"line {lineno}: key {key!r} is ambiguous; put it under one of "
        + ", ".join(f"[{s}]" for s in owners)
    )


def _assign(values, lines, section, key, raw, where):
    if section not in SCHEMA:
        raise ConfigurationError(f"{where}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigurationError(f"{where}: unknown key {key!r} in [{section}]")
    parser = SCHEMA[section][key][0]
    try:
        values[section][key] = parser(raw.strip())
    except ValueError as exc:
        raise ConfigurationError(f"{where}: bad value for {section}.{key}: {exc}") from exc
    lines[f"{section}.{key}"] = where


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse configuration text; ``overrides`` are ``key=value`` strings applied last.

    Defaults are filled in, unknown keys and malformed values are rejected
    with the offending line number, and the problem description is validated.
    """
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    lines: dict[str, str] = {}
    section = None
    content = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        content = True
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigurationError(f"line {lineno}: malformed section header {stripped!r}")
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigurationError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, raw = (x.strip() for x in stripped.split("=", 1))
        target = section or _resolve_bare(key, lineno)
        _assign(values, lines, target, key, raw, f"line {lineno}")
    if not content and not overrides:
        raise ConfigurationError(
            "empty configuration; required keys: " + ", ".join(REQUIRED)
            + f" (one of {', '.join(SCENARIOS)})"
        )
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"--set {item!r}: expected key=value")
        key, raw = (x.strip() for x in item.split("=", 1))
        if "." in key:
            sect, key = key.split(".", 1)
        else:
            sect = _resolve_bare(key, 0)
        _assign(values, lines, sect, key, raw, f"--set {item}")
    config = RunConfig(values, lines=lines)
    if values["problem"]["p"] <= 1:
        where = lines.get("problem.p", "default")
        raise ConfigurationError(f"{where}: p must exceed 1, got {values['problem']['p']}")
    config.problem_spec()
    return config


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if v is None:
        return "auto"
    return str(v)


def echo_config(config: RunConfig) -> str:
    """Fully resolved configuration in the input syntax (re-parseable)."""
    out = []
    for section, keys in config.values.items():
        out.append(f"[{section}]")
        for key, value in keys.items():
            if section == "run" and key == "scenario" and value is None:
                continue
            if section == "initial" and key == "values" and not value:
                continue
            out.append(f"{key} = {_format_value(value)}")
        out.append("")
    return "\n".join(out)


# ----------------------------------------------------------------------------
# snapshot files

MAGIC = b"BULB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIdBdBdBQ")
GEOMETRY_CODES = {g: i for i, g in enumerate(GEOMETRIES)}
BOUNDARY_CODES = {b: i for i, b in enumerate(BOUNDARIES)}
FRAME_KINDS = {"physical": 0, "w": 1, "vn": 2}


class SnapshotFormatError(ValueError):
    pass


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_snapshot(obj) -> bytes:
    if isinstance(obj, Snapshot):
        spec = obj.spec
        head = (spec.N, spec.p, GEOMETRY_CODES[spec.geometry], spec.R,
                BOUNDARY_CODES[spec.boundary], obj.time, FRAME_KINDS["physical"])
        values = obj.values
    elif isinstance(obj, sim.SimilarityFrame):
        geometry = "ball" if obj.radial else "interval"
        kind = FRAME_KINDS["vn" if obj.source == sim.VN else "w"]
        head = (obj.N, obj.p, GEOMETRY_CODES[geometry], obj.Y_max,
                BOUNDARY_CODES["dirichlet"], obj.s, kind)
        values = obj.w
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")
    values = np.ascontiguousarray(values, dtype="<f8")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, *head, values.size)
    return header + values.tobytes()


def write_snapshot(obj, path) -> None:
    """Write a snapshot or similarity frame in the BULB binary layout."""
    _atomic_write(Path(path), encode_snapshot(obj))


def decode_snapshot(data: bytes):
    if len(data) < 8:
        raise SnapshotFormatError(
            f"truncated header: expected at least {_HEADER.size} bytes, got {len(data)}"
        )
    if data[:4] != MAGIC:
        raise SnapshotFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(
            f"unsupported format version {version} (this build reads {FORMAT_VERSION})"
        )
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(
            f"truncated header: expected {_HEADER.size} bytes, got {len(data)}"
        )
    _, _, N, p, gcode, R, bcode, t, kind, count = _HEADER.unpack_from(data)
    expected = _HEADER.size + 8 * count
    if len(data) != expected:
        raise SnapshotFormatError(
            f"payload length mismatch: expected {expected} bytes, got {len(data)}"
        )
    try:
        geometry = GEOMETRIES[gcode]
        boundary = BOUNDARIES[bcode]
        kind_name = {v: k for k, v in FRAME_KINDS.items()}[kind]
    except (IndexError, KeyError) as exc:
        raise SnapshotFormatError(f"invalid header code: {exc}") from exc
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size, count=count).astype(float)
    radial = geometry != "interval"
    if kind_name != "physical":
        y = sim.y_grid(R, count, radial)
        return sim.SimilarityFrame(
            y=y, w=values, s=t, s0=-2.0 if kind_name == "vn" else t, center=0.0, N=N, p=p,
            radial=radial, source=sim.VN if kind_name == "vn" else sim.NATIVE,
        )
    if boundary == "homogeneous":
        initial = InitialData("constant", {"c": float(values[0])})
    else:
        initial = InitialData("table", table=tuple(values))
    spec = ProblemSpec(N, p, geometry, R, boundary, initial)
    grid = make_grid("uniform-radial" if radial else "uniform-interval", R, count, N)
    return Snapshot(grid=grid, values=values, time=t, spec=spec)


def read_snapshot(path):
    """Read a BULB file: a :class:`Snapshot` or, for w / v_n frames, a frame."""
    return decode_snapshot(Path(path).read_bytes())


# ----------------------------------------------------------------------------
# artifact helpers


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_num(v) for v in row) + "\n")
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    return obj


def _exponents_dict(N, p):
    ex = derive_exponents(N, p)
    return {
        "N": ex.N, "p": ex.p, "beta": ex.beta, "q_star": ex.q_star, "kappa": ex.kappa,
        "p_sobolev": ex.p_sobolev, "p_jl": ex.p_jl, "p_lepin": ex.p_lepin,
    }


@dataclass
class ScenarioResult:
    scenario: str
    csv: dict[str, str]
    results: dict
    verdicts: dict[str, bool]
    tolerances: dict
    exponents: dict
    snapshots: dict[str, object] = field(default_factory=dict)
    plots: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _plot_svg(path: Path, spec: dict) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "blowuplab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for label, x, y in spec["curves"]:
            ax.plot(x, y, label=label, linewidth=1.2)
        ax.set_xlabel(spec["xlabel"])
        ax.set_ylabel(spec["ylabel"])
        if spec.get("logy"):
            ax.set_yscale("log")
        if spec.get("logx"):
            ax.set_xscale("log")
        if len(spec["curves"]) > 1:
            ax.legend(fontsize="small")
        ax.set_title(spec["title"])
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    _atomic_write(path, buf.getvalue())


# ----------------------------------------------------------------------------
# scenarios


def _simulate(config: RunConfig):
    spec = config.problem_spec()
    control = config.step_control()
    return solve_until_blowup(
        spec, control, node_count=config["grid.node_count"],
        fit_window=config["control.fit_window"],
    )


def _run_csv(run) -> str:
    return csv_text(("t", "sup_norm", "dt", "mass"), run.series.tolist())


def scenario_simulate(config: RunConfig) -> ScenarioResult:
    spec = config.problem_spec()
    run = _simulate(config)
    ex = spec.exponents
    results = {
        "termination": run.termination, "T_hat": run.T_hat, "fit_slope": run.fit_slope,
        "steps": run.meta["steps"], "final_time": run.final.time,
        "final_sup_norm": run.final.sup_norm, "positivity_violation": run.positivity_violation,
    }
    verdicts, tol = {}, {}
    if spec.initial.family == "constant" and spec.boundary != "dirichlet":
        c = spec.initial.param("c", 1.0)
        if c > 0:
            T = ex.beta * c ** (1.0 - spec.p)
            t, sup = run.sup_series()
            exact = (c ** (1.0 - spec.p) - (spec.p - 1.0) * t) ** (-ex.beta)
            err = float(np.max(np.abs(sup / exact - 1.0)))
            results.update(ode_exact_T=T, ode_max_relative_error=err)
            tol.update(ode_relative_error=1e-4, T_hat_abs=1e-4)
            verdicts["ode_oracle"] = err <= 1e-4
            verdicts["blowup_time"] = run.T_hat is not None and abs(run.T_hat - T) <= 1e-4
    t, sup = run.sup_series()
    plots = [("sup_norm.svg", {
        "title": "sup-norm", "xlabel": "t", "ylabel": "||u||_inf", "logy": True,
        "curves": [("||u||_inf", t, sup)],
    })]
    return ScenarioResult("simulate", {"simulate.csv": _run_csv(run)}, results, verdicts, tol,
                          _exponents_dict(spec.N, spec.p), {"final.bulb": run.final}, plots)


def scenario_similarity(config: RunConfig) -> ScenarioResult:
    spec = config.problem_spec()
    run = _simulate(config)
    if run.T_hat is None:
        raise RuntimeError(f"run ended with {run.termination} and no blow-up time estimate")
    cfg = config.values["similarity"]
    radial = spec.radial and spec.N > 1
    y = sim.y_grid(cfg["Y_max"], cfg["y_nodes"], radial)
    states = [s for s in dg._states(run) if s.time < run.T_hat]
    tau_end = run.T_hat - states[-1].time
    tau_start = tau_end * 10.0 ** cfg["decades"]
    chosen = [s for s in states if run.T_hat - s.time <= tau_start]
    idx = np.unique(np.linspace(0, len(chosen) - 1, cfg["frames"]).round().astype(int))
    frames = [sim.to_similarity_frame(chosen[i], cfg["center"], run.T_hat, y) for i in idx]
    rows = [(f.s, yy, ww) for f in frames for yy, ww in zip(f.y, f.w)]
    kappa = spec.exponents.kappa
    i0 = int(np.argmin(np.abs(y)))
    ratio = [float(f.w[i0] / kappa) for f in frames]
    results = {"T_hat": run.T_hat, "s": [f.s for f in frames], "w_center_over_kappa": ratio}
    verdicts = {}
    if cfg["center"] == 0.0:
        verdicts["w_center_to_kappa"] = abs(ratio[-1] - 1.0) <= 0.05
    snaps = {f"w_{k}.bulb": f for k, f in enumerate(frames)}
    plots = [("w_profiles.svg", {
        "title": "rescaled profiles", "xlabel": "y", "ylabel": "w",
        "curves": [(f"s = {f.s:.3f}", f.y, f.w) for f in frames],
    })]
    return ScenarioResult(
        "similarity", {"similarity.csv": csv_text(("s", "y", "w"), rows)}, results, verdicts,
        {"w_center_relative": 0.05}, _exponents_dict(spec.N, spec.p), snaps, plots,
    )


def scenario_diagnose(config: RunConfig) -> ScenarioResult:
    spec = config.problem_spec()
    run = _simulate(config)
    if run.T_hat is None:
        raise RuntimeError(f"run ended with {run.termination} and no blow-up time estimate")
    d = config.values["diagnostics"]
    ex = spec.exponents
    points = dg.locate_blowup_points(run)
    a0 = points.centers[0] if len(points) else 0.0
    k = d["k"]
    series = dg.build_series(run, parabolas=[(a0, k)], R_far=d["R_far"])
    report = dg.classify_blowup_type(series, window=d["window"], ratio=d["ratio"])
    last = series.tau <= 10.0 * series.tau.min()
    m_rel = float(np.max(np.abs(series.m[last] / ex.kappa - 1.0)))
    conc = series.concentration[(a0, k)]
    target = dg.homogeneous_concentration(spec.N, spec.p, k)
    conc_rel = float(np.max(np.abs(conc[last] / target - 1.0)))
    eta = float(np.min(conc[last]))
    states = [s for s in dg._states(run) if s.time < run.T_hat]
    final = states[-1]
    direct = dg.concentration_integral(final, a0, k, run.T_hat)
    framed = dg.w_frame_integral(final, a0, k, run.T_hat)
    identity = abs(direct / framed - 1.0)
    decay = dg.epsilon_regularity_check(run, d["decay_center"], q=d["decay_q"])
    far = dg.far_field_bound_check(run, d["R_far"])
    results = {
        "T_hat": run.T_hat, "termination": run.termination,
        "classification": report.verdict, "C1_hat": report.C1_hat, "C2_hat": report.C2_hat,
        "M": series.M, "m_max_relative_deviation_last_decade": m_rel,
        "blowup_points": points.centers, "concentration_target": target,
        "concentration_max_relative_deviation_last_decade": conc_rel, "eta": eta,
        "change_of_variables_relative": identity, "decay_rate": decay.rate_hat,
        "decay_q": decay.q, "decay_C0": decay.C0_hat, "far_field_sup": far.sup_value,
        "far_field_growth": far.growth,
    }
    verdicts = {
        "type_I": report.verdict == dg.TYPE_I and m_rel <= d["m_tolerance"],
        "concentration": conc_rel <= d["concentration_tolerance"] and eta > 0,
        "change_of_variables": identity <= d["identity_tolerance"],
        "epsilon_regularity": decay.passes,
        "far_field_bounded": far.bounded,
    }
    tol = {
        "m_relative": d["m_tolerance"], "concentration_relative": d["concentration_tolerance"],
        "identity_relative": d["identity_tolerance"], "decay_band": list(decay.band),
        "far_field_growth": 0.10, "type_ratio": d["ratio"],
    }
    rows = zip(series.t, series.tau, series.sup_norm, series.m, series.critical, conc,
               series.far_field)
    csvs = {
        "diagnostics.csv": csv_text(
            ("t", "tau", "sup_norm", "m", "critical_integral", "concentration", "far_field"),
            rows),
        "decay.csv": csv_text(("s", "weighted_norm"), zip(decay.s, decay.norms)),
        "simulate.csv": _run_csv(run),
    }
    plots = [("m_of_t.svg", {
        "title": "type-I constant", "xlabel": "T_hat - t", "ylabel": "m(t) / kappa",
        "logx": True, "curves": [("m / kappa", series.tau, series.m / ex.kappa)],
    })]
    return ScenarioResult("diagnose", csvs, results, verdicts, tol,
                          _exponents_dict(spec.N, spec.p), {"final.bulb": run.final}, plots)


def scenario_profile(config: RunConfig) -> ScenarioResult:
    pr = config.values["problem"]
    c = config.values["profile"]
    N, p = pr["N"], pr["p"]
    ex = derive_exponents(N, p)
    lo = c["alpha_min"] if c["alpha_min"] is not None else ex.kappa + 0.01
    found = ss.search_profiles(
        N, p, (lo, c["alpha_max"]), step=c["step"], R_max=c["R_max"], G_max=c["G_max"],
        bisection_tolerance=c["bisection_tolerance"],
    )
    atlas = ss.atlas_rows(found)
    header = ("N", "p", "alpha", "classification", "tail_exponent", "norm_slope")
    csvs = {"atlas.csv": csv_text(header, [[row[h] for h in header] for row in atlas])}
    results = {"candidates": atlas, "alpha_range": [lo, c["alpha_max"]]}
    verdicts, tol, plots = {}, {}, []
    if p <= ex.p_sobolev:
        verdicts["constants_only"] = not found
    else:
        verdicts["profile_found"] = bool(found)
        if found:
            prof = found[0]
            slope, corr = ss.profile_critical_norm_growth(prof)
            tail_err = abs(prof.tail_exponent / (-2.0 * ex.beta) - 1.0)
            results.update(alpha=prof.alpha, tail_exponent=prof.tail_exponent,
                           R_effective=prof.R_max, norm_slope=slope, norm_correlation=corr)
            verdicts["tail_exponent"] = tail_err <= c["tail_tolerance"]
            verdicts["critical_norm_growth"] = corr > c["min_correlation"] and slope > 0
            csvs["profile.csv"] = csv_text(("r", "phi", "dphi"),
                                           zip(prof.r, prof.phi, prof.dphi))
            plots.append(("profile.svg", {
                "title": "profile", "xlabel": "r", "ylabel": "phi", "logx": True,
                "curves": [("phi", prof.r[1:], prof.phi[1:])],
            }))
    tol.update(tail_relative=c["tail_tolerance"], min_correlation=c["min_correlation"])
    return ScenarioResult("profile", csvs, results, verdicts, tol, _exponents_dict(N, p),
                          plots=plots)


def scenario_semigroup(config: RunConfig) -> ScenarioResult:
    c = config.values["semigroup"]
    rng = np.random.default_rng(config.seed)
    quad = sim.RhoQuadrature(N=1, Y_max=c["Y_max"], nodes=c["nodes"])
    gh = sim.RhoQuadrature(N=1, rule="gauss-hermite")
    y = np.linspace(-6.0, 6.0, 241)
    oracle_err = 0.0
    for s in c["s_values"]:
        e = math.exp(-s / 2.0)
        for f, g in ((lambda z: np.ones_like(z), lambda z: np.ones_like(z)),
                     (lambda z: z, lambda z: e * z),
                     (lambda z: z * z - 2.0, lambda z: e * e * (z * z - 2.0))):
            oracle_err = max(oracle_err, float(np.max(np.abs(sim.mehler_apply(f, s, gh, y) - g(y)))))
    phi0 = sim.random_band_limited(rng)
    s1, s2 = 0.3, 0.7
    inner = lambda z: sim.mehler_apply(phi0, s1, gh, z)  # noqa: E731
    law = float(np.max(np.abs(sim.mehler_apply(inner, s2, gh, y)
                              - sim.mehler_apply(phi0, s1 + s2, gh, y))))
    phis = [sim.random_band_limited(rng) for _ in range(c["functions"])]
    reports = sim.contraction_sweep(phis, c["s_values"], c["q_values"], quad, c["tolerance"])
    margin = min(r.margin for r in reports)
    centers = np.linspace(-c["scan_b_max"], c["scan_b_max"], c["scan_b_count"])
    scan = sim.delayed_smoothing_scan(c["scan_q"], centers, c["scan_s"],
                                      sim.RhoQuadrature(N=1, Y_max=c["Y_max"], nodes=4001),
                                      width=c["scan_width"])
    s_small = min(c["scan_s"])
    b, ratio = scan.ratios(s_small)
    half = b >= 0
    monotone = bool(np.all(np.diff(ratio[half][np.argsort(b[half])]) > 0))
    results = {
        "oracle_max_error": oracle_err, "semigroup_law_error": law,
        "contraction_min_margin": margin, "contraction_cases": len(reports),
        "smoothing_s_star": scan.s_star, "smoothing_growth": scan.growth,
        "monotone_growth_at_smallest_s": monotone,
    }
    verdicts = {
        "eigen_oracles": oracle_err <= c["oracle_tolerance"],
        "semigroup_law": law <= 1e-6,
        "contraction": all(not r.violated for r in reports) and margin >= -c["tolerance"],
        "delayed_smoothing": scan.s_star is not None and scan.s_star > s_small and monotone,
    }
    tol = {"oracle": c["oracle_tolerance"], "semigroup_law": 1e-6,
           "contraction_margin": -c["tolerance"]}
    n_s, n_q = len(c["s_values"]), len(c["q_values"])
    rows = [(i // (n_s * n_q), r.q, r.s, r.norm_in, r.norm_out, r.margin)
            for i, r in enumerate(reports)]
    csvs = {
        "contraction.csv": csv_text(("function", "q", "s", "norm_in", "norm_out", "margin"), rows),
        "smoothing.csv": csv_text(("b", "s", "ratio"), scan.rows),
    }
    plots = [("smoothing.svg", {
        "title": "delayed smoothing", "xlabel": "b", "ylabel": "ratio", "logy": True,
        "curves": [(f"s = {s:g}", *scan.ratios(s)) for s in c["scan_s"]],
    })]
    return ScenarioResult("semigroup", csvs, results, verdicts, tol, _exponents_dict(1, 3.0),
                          plots=plots)


def scenario_bubble(config: RunConfig) -> ScenarioResult:
    c = config.values["bubble"]
    N = c["N"]
    spec0 = ss.BubbleSpec(N)
    oracle = ss.bubble_norm_oracle(N)
    rows = []
    norms = []
    for lam in c["lambdas"]:
        val = ss.bubble_critical_norm(ss.BubbleSpec(N, lam))
        norms.append(val)
        rows.append((lam, val, oracle, val / oracle - 1.0))
    nodes = int(round(c["r_max"] / c["h"])) + 1
    if nodes % 2 == 0:
        nodes += 1
    grid = make_grid("uniform-radial", c["r_max"], nodes, N)
    residual = ss.bubble_residual(spec0, grid)
    spread = (max(norms) - min(norms)) / abs(np.mean(norms))
    ref = norms[list(c["lambdas"]).index(1.0)] if 1.0 in c["lambdas"] else norms[0]
    results = {"critical_norm": ref, "oracle": oracle, "by_lambda": dict(zip(c["lambdas"], norms)),
               "lambda_spread": spread, "residual": residual, "c_N": spec0.c}
    verdicts = {
        "beta_oracle": all(abs(r[3]) <= c["tolerance"] for r in rows),
        "lambda_independence": spread <= c["tolerance"],
        "pde_residual": residual <= c["residual_tolerance"],
    }
    tol = {"relative": c["tolerance"], "residual": c["residual_tolerance"]}
    r = np.linspace(0.0, c["r_max"], 401)
    plots = [("bubble.svg", {
        "title": "bubble", "xlabel": "r", "ylabel": "U", "curves": [
            (f"lambda = {lam:g}", r, ss.bubble_value(ss.BubbleSpec(N, lam), r))
            for lam in c["lambdas"]
        ],
    })]
    csvs = {"bubble.csv": csv_text(("lambda", "critical_norm", "oracle", "relative_error"), rows)}
    return ScenarioResult("bubble", csvs, results, verdicts, tol,
                          _exponents_dict(N, (N + 2) / (N - 2)), plots=plots)


PIPELINES = {
    "simulate": scenario_simulate,
    "similarity": scenario_similarity,
    "diagnose": scenario_diagnose,
    "profile": scenario_profile,
    "semigroup": scenario_semigroup,
    "bubble": scenario_bubble,
}


def summary_json(config: RunConfig, result: ScenarioResult, wall_time: float | None) -> str:
    doc = {
        "scenario": result.scenario,
        "inputs": config.as_dict(),
        "derived_exponents": result.exponents,
        "verdicts": {k: "pass" if v else "fail" for k, v in result.verdicts.items()},
        "tolerances": result.tolerances,
        "results": result.results,
        "wall_time": wall_time,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def run_scenario(config: RunConfig, out_dir=None) -> tuple[int, dict[str, Path]]:
    """Run the configured scenario and write its artifacts.

    Returns the exit status (0 all checks pass, 2 a check failed, 1 fault)
    and the written paths. Faults are logged with the scenario name.
    """
    scenario = config.scenario
    if scenario is None:
        raise ConfigurationError("missing required key run.scenario")
    out = Path(out_dir or config.out_dir or os.environ.get(OUT_DIR_ENV) or "blowuplab-out")
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    def emit(name, data):
        path = out / name
        _atomic_write(path, data.encode() if isinstance(data, str) else data)
        written[name] = path

    emit("config.ini", echo_config(config))
    start = time.perf_counter()
    try:
        result = PIPELINES[scenario](config)
    except Exception as exc:  # surfaced with scenario context
        log.error("[%s] %s: %s", scenario, type(exc).__name__, exc)
        emit("error.txt", f"{scenario}: {type(exc).__name__}: {exc}\n")
        return EXIT_FAULT, written
    wall = time.perf_counter() - start
    fmt = config["run.format"]
    if fmt in ("csv", "both"):
        for name, text in result.csv.items():
            emit(name, text)
    if fmt in ("json", "both"):
        emit("summary.json", summary_json(config, result, wall))
    for name, obj in result.snapshots.items():
        emit(name, encode_snapshot(obj))
    if config["run.svg"]:
        for name, spec in result.plots:
            _plot_svg(out / name, spec)
            written[name] = out / name
    for name, ok in result.verdicts.items():
        log.info("[%s] %s: %s", scenario, name, "pass" if ok else "fail")
    return (EXIT_OK if result.passed else EXIT_CHECK_FAILED), written


# ----------------------------------------------------------------------------
# command line


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blowuplab",
        description="Numerical blow-up laboratory for u_t = Δu + |u|^{p-1}u.",
        epilog=f"Default output directory: ${OUT_DIR_ENV} if set, else ./blowuplab-out.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", type=Path, help="configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        p.add_argument("--out-dir", type=Path, help="directory for artifacts")
        p.add_argument("--format", choices=("csv", "json", "both"), help="tabular outputs")
        p.add_argument("--svg", action="store_true", help="also render SVG plots")
        p.add_argument("--seed", type=int, help="seed for randomized checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = [f"run.scenario={args.scenario}"]
    if args.format:
        overrides.append(f"run.format={args.format}")
    if args.svg:
        overrides.append("run.svg=true")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    overrides += args.set
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        config = parse_config(text, overrides)
    except (OSError, ConfigurationError, ValueError) as exc:
        print(f"blowuplab {args.scenario}: configuration error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    status, written = run_scenario(config, args.out_dir)
    if status == EXIT_FAULT:
        print(f"blowuplab {args.scenario}: fault, see {written.get('error.txt')}", file=sys.stderr)
    else:
        print(f"blowuplab {args.scenario}: {'pass' if status == EXIT_OK else 'check failed'}"
              f" ({len(written)} files in {next(iter(written.values())).parent})")
    return status


if __name__ == "__main__":
    sys.exit(main())
