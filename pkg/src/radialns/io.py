"""Configuration parsing and text serialization of profiles, logs, reports and manifests."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .fixedpoint import PhysicalProfile, SolverControl, StationarySolution
from .grid import RadialGrid, SampledField
from .model import Parameters, ParameterError, build_parameters

__all__ = [
    "ConfigError",
    "RunSpec",
    "RunManifest",
    "PROFILE_COLUMNS",
    "parse_config",
    "write_profile",
    "read_profile",
    "profile_fields",
    "write_convergence_log",
    "write_report",
    "read_report",
    "write_table",
    "sha256_of",
]

PROFILE_COLUMNS = ("r", "eta", "chi", "zeta", "rho", "u", "theta", "p")
DEFAULTS = {"R_max": 200.0, "N": 4096, "tol": 1e-10, "max_iter": 200}
MAX_NODES = 10_000_000
MIN_TOL = 1e-14

_SECTIONS = ("parameters", "grid", "control", "sweep", "verify", "fit")


class ConfigError(ValueError):
    """Bad configuration; ``where`` names the field or line."""

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class RunSpec:
    parameters: Parameters
    raw_parameters: dict
    R_max: float = DEFAULTS["R_max"]
    N: int = DEFAULTS["N"]
    tol: float = DEFAULTS["tol"]
    max_iter: int = DEFAULTS["max_iter"]
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    workers: int | None = None
    fit_window: tuple | None = None
    delta: float = 0.5
    profile_path: str | None = None
    source: str | None = None

    @property
    def control(self) -> SolverControl:
        return SolverControl(tol=self.tol, max_iter=self.max_iter, R_max=self.R_max, N=self.N)

    def echo(self) -> dict:
        """Fully resolved spec, defaults included, as plain JSON types."""
        p = self.parameters
        return {
            "parameters": {
                "n": p.n,
                "R_gas": p.R_gas,
                "c_V": p.c_V,
                "nu": p.nu,
                "lam": p.lam,
                "kappa": p.kappa,
                "v_plus": p.v_plus,
                "theta_plus": p.theta_plus,
                "u_minus": p.u_minus,
                "eta_minus": p.eta_minus,
                "chi_minus": p.chi_minus,
            },
            "grid": {"R_max": self.R_max, "N": self.N},
            "control": {"tol": self.tol, "max_iter": self.max_iter},
            "sweep": {"axis": self.sweep_axis, "values": list(self.sweep_values), "workers": self.workers},
            "fit": {"window": list(self.fit_window) if self.fit_window else None, "delta": self.delta},
            "verify": {"profile": self.profile_path},
            "source": self.source,
        }


@dataclass
class RunManifest:
    version: str
    command: str
    spec: dict
    timings: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    def add_file(self, path: Path):
        path = Path(path)
        self.files[path.name] = {"sha256": sha256_of(path), "bytes": path.stat().st_size}

    def write(self, path: Path) -> Path:
        path = Path(path)
        body = {
            "version": self.version,
            "command": self.command,
            "spec": self.spec,
            "timings": self.timings,
            "convergence": self.convergence,
            "bounds": self.bounds,
            "files": self.files,
        }
        _write_text(path, json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# configuration


def _num(section: dict, key: str, where: str, kind=float):
    value = section[key]
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", where)
    try:
        # YAML 1.1 reads "1e-3" (no dot) as a string
        x = kind(float(value)) if kind is int else float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", where) from None
    if kind is int and float(value) != x:
        raise ConfigError(f"expected an integer, got {value!r}", where)
    if not math.isfinite(x):
        raise ConfigError(f"not finite: {value!r}", where)
    return x


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError("expected a mapping", name)
    return sec


def parse_config(path) -> RunSpec:
    """Read a YAML run specification; missing grid and control entries take their defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(f"parse error: {getattr(exc, 'problem', exc)}", where) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", str(path))
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(map(str, unknown))}", str(path))
    raw = _section(doc, "parameters")
    if not raw:
        raise ConfigError("missing section", "parameters")
    try:
        params = build_parameters(raw)
    except ParameterError as exc:
        raise ConfigError(str(exc), "parameters") from exc

    grid = _section(doc, "grid")
    control = _section(doc, "control")
    R_max = _num(grid, "R_max", "grid.R_max") if "R_max" in grid else DEFAULTS["R_max"]
    N = _num(grid, "N", "grid.N", int) if "N" in grid else DEFAULTS["N"]
    tol = _num(control, "tol", "control.tol") if "tol" in control else DEFAULTS["tol"]
    max_iter = _num(control, "max_iter", "control.max_iter", int) if "max_iter" in control else DEFAULTS["max_iter"]
    if not 10 <= R_max:
        raise ConfigError(f"R_max >= 10 required, got {R_max}", "grid.R_max")
    if not 64 <= N <= MAX_NODES:
        raise ConfigError(f"N must lie in [64, {MAX_NODES}], got {N}", "grid.N")
    if not tol >= MIN_TOL:
        raise ConfigError(f"tol >= {MIN_TOL} required, got {tol}", "control.tol")
    if max_iter < 1:
        raise ConfigError(f"max_iter >= 1 required, got {max_iter}", "control.max_iter")

    sw = _section(doc, "sweep")
    axis = sw.get("axis")
    values = sw.get("values", [])
    if values is None:
        values = []
    if not isinstance(values, list):
        raise ConfigError("expected a list", "sweep.values")
    values = tuple(_num({"v": v}, "v", f"sweep.values[{i}]") for i, v in enumerate(values))
    workers = _num(sw, "workers", "sweep.workers", int) if "workers" in sw else None

    fit = _section(doc, "fit")
    window = None
    if fit.get("window") is not None:
        w = fit["window"]
        if not isinstance(w, list) or len(w) != 2:
            raise ConfigError("expected [r_lo, r_hi]", "fit.window")
        window = (_num({"v": w[0]}, "v", "fit.window"), _num({"v": w[1]}, "v", "fit.window"))
        if not 1 <= window[0] < window[1] <= R_max:
            raise ConfigError(f"window must satisfy 1 <= lo < hi <= R_max, got {list(window)}", "fit.window")
    delta = _num(fit, "delta", "fit.delta") if "delta" in fit else 0.5

    ver = _section(doc, "verify")
    profile = ver.get("profile")
    if profile is not None:
        profile = str((path.parent / profile) if not os.path.isabs(str(profile)) else profile)

    return RunSpec(
        parameters=params,
        raw_parameters=dict(raw),
        R_max=R_max,
        N=N,
        tol=tol,
        max_iter=max_iter,
        sweep_axis=str(axis) if axis is not None else None,
        sweep_values=values,
        workers=workers,
        fit_window=window,
        delta=delta,
        profile_path=profile,
        source=str(path),
    )


# ---------------------------------------------------------------------------
# files


def _write_text(path: Path, text: str):
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_profile(prof: PhysicalProfile, path) -> Path:
    """Whitespace-delimited columns r eta chi zeta rho u theta p at 17 significant digits."""
    path = Path(path)
    cols = [prof.r, prof.eta.values, prof.chi.values, prof.zeta.values, prof.rho.values, prof.u.values,
            prof.theta.values, prof.p.values]
    data = np.column_stack(cols)
    lines = [" ".join(PROFILE_COLUMNS)]
    lines.extend(" ".join(_fmt(x) for x in row) for row in data)
    _write_text(path, "\n".join(lines) + "\n")
    return path


def read_profile(path) -> dict:
    """Columns of a profile file keyed by name."""
    path = Path(path)
    try:
        with open(path) as fh:
            header = fh.readline().split()
            if tuple(header) != PROFILE_COLUMNS:
                raise ConfigError(f"unexpected header {' '.join(header)!r}", str(path))
            data = np.loadtxt(fh, dtype=float, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read profile: {exc.strerror}", str(path)) from None
    except ValueError as exc:
        raise ConfigError(f"malformed profile: {exc}", str(path)) from None
    if data.shape[1] != len(PROFILE_COLUMNS):
        raise ConfigError(f"expected {len(PROFILE_COLUMNS)} columns, got {data.shape[1]}", str(path))
    return {name: data[:, i].copy() for i, name in enumerate(PROFILE_COLUMNS)}


def profile_fields(table: dict, grid: RadialGrid, p: Parameters, mass_flux: float) -> PhysicalProfile:
    """Rebuild a PhysicalProfile from file columns on a matching grid."""
    if table["r"].shape != grid.nodes.shape or not np.array_equal(table["r"], grid.nodes):
        raise ConfigError(f"profile radii do not match the configured grid (N = {grid.N}, R_max = {grid.R_max:g})")
    n = p.n
    tails = {"eta": n - 2.0, "chi": n - 2.0, "zeta": n - 1.0, "rho": 0.0, "u": n - 1.0, "theta": 0.0, "p": 0.0}
    f = {k: SampledField(grid, table[k], t) for k, t in tails.items()}
    return PhysicalProfile(f["eta"], f["chi"], f["zeta"], f["rho"], f["u"], f["theta"], f["p"], mass_flux)


def write_convergence_log(sol: StationarySolution, path) -> Path:
    """One line per iterate: iteration, increment norm, ratio to the previous increment."""
    path = Path(path)
    if sol.method == "closed-form":
        _write_text(path, "# closed-form\niteration increment ratio\n")
        return path
    incs = sol.state.increment_norms
    lines = [f"# {sol.method} {sol.status}", "iteration increment ratio"]
    for i, inc in enumerate(incs):
        ratio = _fmt(incs[i] / incs[i - 1]) if i > 0 and incs[i - 1] > 0 else "nan"
        lines.append(f"{i + 1} {_fmt(inc)} {ratio}")
    _write_text(path, "\n".join(lines) + "\n")
    return path


def _value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_value(x) for x in v)
    return str(v).replace("\n", " ")


def write_report(record: dict, path) -> Path:
    """Flat ``key = value`` lines in insertion order."""
    path = Path(path)
    _write_text(path, "".join(f"{k} = {_value(v)}\n" for k, v in record.items()))
    return path


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def write_table(rows: list, columns: list, path) -> Path:
    """Tab-delimited table with a header line; missing cells are written as nan."""
    path = Path(path)
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(_value(row.get(c, float("nan"))) for c in columns))
    _write_text(path, "\n".join(lines) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj
