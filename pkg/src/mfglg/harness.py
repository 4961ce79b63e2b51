"""Convergence studies: configuration, error metrics, orchestration and output.

A study runs one solver per mesh size in ``dx_list`` and compares selected
fields against a truth: the closed-form LQ solution, the OU law, or (for the
local-coupling problem) a much finer reference solve that is cached on disk.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from . import __version__
from .characteristics import DriftFunction
from .fokker_planck import DensityField, FPProblem, fp_solve
from .grid import UniformGrid, interpolate, interpolate_fields, simpson_integrate
from .hjb import BoundarySpec, ControlSet, numerical_gradient
from .mfg import MFGProblem, mfg_solve, time_steps
from .oracle import LQParameters, exact_density, exact_gradient, exact_value, ou_density
from .problems import local_initial_density, local_initial_density_scalar

log = logging.getLogger(__name__)

TEST_IDS = ("lq-1d", "lq-2d", "local-1d", "fp-only-ou")
ENV_PREFIX = "MFGLG_"
CSV_HEADER = ("dx", "dt", "e_inf", "e_2", "p_inf", "p_2", "positivity_error", "iterations", "wall_time_s")
PLOT_COLUMNS = ("m_T", "m_exact_T", "v_0", "v_exact_0")
FAILED = "failed"

_TEST_DEFAULTS = {
    "lq-1d": dict(half_sigma2=0.05, T=0.25, box=(-2.0, 2.0), dx_list=(0.2, 0.1, 0.05, 0.025),
                  dt_c=0.25, dt_gamma=4.0 / 3.0, control_radius=1.0),
    "lq-2d": dict(half_sigma2=0.05, T=0.25, box=(-2.0, 2.0), dx_list=(0.2, 0.1, 0.05),
                  dt_c=0.25, dt_gamma=4.0 / 3.0, control_radius=1.0),
    "local-1d": dict(half_sigma2=0.05, T=0.05, box=(0.0, 1.0), dx_list=(0.05, 0.025, 0.0125, 0.00625),
                     dt_c=1.0 / 3.0, dt_gamma=1.5, control_radius=4.0),
    "fp-only-ou": dict(half_sigma2=0.05, T=0.25, box=(-2.0, 2.0), dx_list=(0.2, 0.1, 0.05, 0.025),
                       dt_c=0.25, dt_gamma=4.0 / 3.0, control_radius=1.0),
}


# --------------------------------------------------------------------------
# configuration


@dataclass
class StudyConfig:
    """Resolved study parameters.  ``None`` fields take per-test defaults."""

    test: str = "lq-1d"
    half_sigma2: Optional[float] = None
    T: Optional[float] = None
    box: Optional[tuple] = None
    dx_list: Optional[tuple] = None
    dt_c: Optional[float] = None
    dt_gamma: Optional[float] = None
    tau: float = 1e-9
    max_outer: int = 50
    damping: float = 1.0
    control_radius: Optional[float] = None
    control_coarse: int = 15
    control_rounds: int = 3
    control_shrink: float = 0.25
    mu0: float = 0.0
    sigma0: float = 0.1
    ref_dx: float = 1.0 / 1500.0
    ref_dt_c: float = 1.0 / 3.0
    ref_dt_gamma: float = 1.5
    ref_warm_start: bool = True
    out_dir: str = "results"
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if self.test not in TEST_IDS:
            raise ValueError(f"unknown test {self.test!r}; expected one of {TEST_IDS}")
        for key, value in _TEST_DEFAULTS[self.test].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        self.box = tuple(float(b) for b in self.box)
        self.dx_list = tuple(float(h) for h in self.dx_list)
        if self.cache_dir is None:
            self.cache_dir = str(Path(self.out_dir) / "reference-cache")
        self.validate()

    @property
    def dim(self) -> int:
        return 2 if self.test == "lq-2d" else 1

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.half_sigma2)

    @property
    def controls(self) -> ControlSet:
        return ControlSet(self.control_radius, self.control_coarse, self.control_rounds, self.control_shrink)

    def validate(self):
        if len(self.box) != 2 or self.box[1] <= self.box[0]:
            raise ValueError("box must be 'lower,upper' with lower < upper")
        if not self.dx_list:
            raise ValueError("dx_list is empty")
        if any(b >= a for a, b in zip(self.dx_list, self.dx_list[1:])):
            raise ValueError("dx_list must be strictly decreasing")
        length = self.box[1] - self.box[0]
        for h in self.dx_list + ((self.ref_dx,) if self.test == "local-1d" else ()):
            cells = length / h
            if abs(cells - round(cells)) > 1e-6 * cells or round(cells) % 2:
                raise ValueError(f"dx={h!r} does not split the box into an even number of cells")
        if self.test == "local-1d" and self.ref_dx * 4 > self.dx_list[-1] * (1 + 1e-12):
            raise ValueError("reference dx must be at least 4x finer than the finest study dx")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _convert(name: str, raw: str):
    """Parse a textual value for the ``StudyConfig`` field ``name``."""
    raw = raw.strip()
    if name in ("box", "dx_list"):
        return tuple(float(v) for v in raw.replace(" ", "").strip("()[]").split(",") if v)
    if name in ("test", "out_dir", "cache_dir"):
        return raw
    if name in ("max_outer", "control_coarse", "control_rounds"):
        return int(raw)
    if name == "ref_warm_start":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return float(raw)


_FIELDS = {f.name for f in dataclasses.fields(StudyConfig)}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def env_overrides(environ: Mapping[str, str] = os.environ) -> dict:
    out = {}
    for name in _FIELDS:
        raw = environ.get(ENV_PREFIX + name.upper())
        if raw is not None:
            out[name] = _convert(name, raw)
    return out


def load_config(path=None, overrides: Optional[Mapping] = None,
                environ: Mapping[str, str] = os.environ) -> StudyConfig:
    """File values, then ``MFGLG_*`` environment variables, then ``overrides``."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update(env_overrides(environ))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return StudyConfig(**values)


def config_hash(values: Mapping) -> str:
    blob = json.dumps(values, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------------
# metrics


class ErrorMetrics(tuple):
    """``(E_inf, E_2)``; ``relative`` is False when the truth vanished."""

    def __new__(cls, e_inf, e_2, relative=True):
        self = super().__new__(cls, (float(e_inf), float(e_2)))
        self.relative = relative
        return self

    @property
    def e_inf(self) -> float:
        return self[0]

    @property
    def e_2(self) -> float:
        return self[1]


def error_metrics(approx, truth, grid: UniformGrid) -> ErrorMetrics:
    """Relative nodal sup-norm and relative Simpson L2 norm of ``approx - truth``."""
    approx = np.asarray(approx, dtype=float).reshape(grid.shape)
    truth = np.asarray(truth, dtype=float).reshape(grid.shape)
    diff = approx - truth
    e_inf = float(np.max(np.abs(diff)))
    e_2 = math.sqrt(max(simpson_integrate(diff**2, grid), 0.0))
    d_inf = float(np.max(np.abs(truth)))
    d_2 = math.sqrt(max(simpson_integrate(truth**2, grid), 0.0))
    if d_inf == 0.0 or d_2 == 0.0:
        return ErrorMetrics(e_inf, e_2, relative=False)
    return ErrorMetrics(e_inf / d_inf, e_2 / d_2)


def positivity_error(m) -> float:
    """Largest negative part of the density over the space-time mesh."""
    values = m.values if isinstance(m, DensityField) else np.asarray(m)
    return float(max(0.0, -np.min(values)))


def observed_rates(dx, errors) -> list:
    """``log(E_prev / E) / log(dx_prev / dx)``; ``None`` for the first row and
    wherever an error is missing or non-positive.  Equals ``log2`` of the
    error ratio under mesh halving."""
    rates = [None]
    for (h0, e0), (h1, e1) in zip(zip(dx, errors), list(zip(dx, errors))[1:]):
        if e0 is None or e1 is None or not (e0 > 0 and e1 > 0):
            rates.append(None)
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


# --------------------------------------------------------------------------
# report types


@dataclass
class ReportRow:
    dx: float
    dt: float
    e_inf: Optional[float] = None
    e_2: Optional[float] = None
    p_inf: Optional[float] = None
    p_2: Optional[float] = None
    positivity_error: Optional[float] = None
    iterations: Optional[int] = None
    wall_time_s: Optional[float] = None
    failed: Optional[str] = None


@dataclass
class RunRecord:
    """Diagnostics of one solve (study row or reference)."""

    dx: float
    dt: float
    n_steps: int
    iterations: int = 0
    converged: bool = False
    mass_drift: float = math.nan  # max_k |sum m_k / sum m_0 - 1|
    boundary_loss: float = 0.0  # mass dropped at Dirichlet walls, relative to sum m_0
    mass_balance: float = math.nan  # max_k |(sum m_k + lost up to k) / sum m_0 - 1|
    positivity_error: float = math.nan
    l2_initial: float = math.nan
    l2_max: float = math.nan
    control_ratio: float = math.nan
    max_increments: list = field(default_factory=list)
    wall_time_s: float = 0.0
    failed: Optional[str] = None


@dataclass
class ConvergenceReport:
    config: StudyConfig
    fields: dict  # name -> list[ReportRow]
    runs: list  # list[RunRecord]
    plot: Optional[dict] = None  # columns of the finest successful run
    reference: Optional[RunRecord] = None

    @property
    def test(self) -> str:
        return self.config.test


def _fill_rates(rows: list) -> list:
    dx = [r.dx for r in rows]
    for attr, rate in (("e_inf", "p_inf"), ("e_2", "p_2")):
        for row, p in zip(rows, observed_rates(dx, [getattr(r, attr) for r in rows])):
            setattr(row, rate, p)
    return rows


# --------------------------------------------------------------------------
# problems


def _grid(cfg: StudyConfig, dx: float) -> UniformGrid:
    lo, hi = cfg.box
    return UniformGrid.from_box((lo,) * cfg.dim, (hi,) * cfg.dim, dx)


def lq_params(cfg: StudyConfig) -> LQParameters:
    d = cfg.dim
    return LQParameters(T=cfg.T, sigma=cfg.sigma, dim=d, mu0=(cfg.mu0,) * d, sigma0=(cfg.sigma0,) * d)


def build_problem(cfg: StudyConfig, dx: float, dt_rule=None) -> MFGProblem:
    grid = _grid(cfg, dx)
    dt, n = time_steps(cfg.T, grid.dx, *(dt_rule or (cfg.dt_c, cfg.dt_gamma)))
    common = dict(sigma=cfg.sigma, T=cfg.T, grid=grid, n_steps=n, controls=cfg.controls,
                  tau=cfg.tau, max_outer=cfg.max_outer, damping=cfg.damping)
    if cfg.test in ("lq-1d", "lq-2d"):
        params = lq_params(cfg)
        return MFGProblem(
            m0=lambda x: exact_density(0.0, x, params),
            coupling="nonlocal-moment",
            hjb_bc=BoundarySpec("dirichlet", lambda t, x: exact_value(t, x, params)),
            fp_boundary="dirichlet",
            **common,
        )
    if cfg.test == "local-1d":
        return MFGProblem(
            m0=local_initial_density,
            m0_scalar=local_initial_density_scalar,
            coupling="local-pointwise",
            hjb_bc=BoundarySpec("neumann"),
            fp_boundary="neumann",
            **common,
        )
    raise ValueError(f"{cfg.test} is not a coupled problem")


def _mass_diagnostics(m: DensityField) -> tuple[float, float, float]:
    """Nodal-sum drift, total boundary loss and drift of the balance sum + loss."""
    sums = m.nodal_sums()
    drift = float(np.max(np.abs(sums / sums[0] - 1.0)))
    lost = np.concatenate([[0.0], np.cumsum(m.lost_mass)]) if m.lost_mass is not None else np.zeros_like(sums)
    balance = float(np.max(np.abs((sums + lost) / sums[0] - 1.0)))
    return drift, float(lost[-1] / sums[0]), balance


def _l2_norms(m: DensityField) -> np.ndarray:
    return np.sqrt([max(simpson_integrate(s**2, m.grid), 0.0) for s in m.values])


def _record(dx, dt, n, m: DensityField, wall, iterations=0, converged=True, ratio=math.nan, incs=()):
    drift, net, balance = _mass_diagnostics(m)
    l2 = _l2_norms(m)
    return RunRecord(dx=dx, dt=dt, n_steps=n, iterations=iterations, converged=converged,
                     mass_drift=drift, boundary_loss=net, mass_balance=balance, positivity_error=positivity_error(m),
                     l2_initial=float(l2[0]), l2_max=float(l2.max()), control_ratio=ratio,
                     max_increments=list(incs), wall_time_s=wall)


# --------------------------------------------------------------------------
# local-coupling reference


@dataclass
class ReferenceSolution:
    grid: UniformGrid
    v0: np.ndarray
    m_T: np.ndarray
    record: RunRecord

    def sample(self, grid: UniformGrid) -> dict:
        """``v(0)``, ``dx v(0)`` and ``m(T)`` on the nodes of ``grid`` by cubic interpolation."""
        x = grid.points()
        grad = numerical_gradient(self.v0, self.grid, "neumann")[..., 0]
        v, m = interpolate_fields(np.stack([self.v0.ravel(), self.m_T.ravel()]), x, self.grid, "reflect")
        dv = interpolate(grad, x, self.grid, "reflect_odd")
        return {"v": v, "dv": dv, "m": m}


def reference_spec(cfg: StudyConfig) -> dict:
    """Everything that determines the cached reference solution."""
    keys = ("half_sigma2", "T", "box", "tau", "max_outer", "damping", "control_radius", "control_coarse",
            "control_rounds", "control_shrink", "ref_dx", "ref_dt_c", "ref_dt_gamma", "ref_warm_start")
    spec = {k: getattr(cfg, k) for k in keys}
    spec["test"] = cfg.test
    spec["version"] = __version__
    if cfg.ref_warm_start:
        spec["warm_from_dx"] = cfg.dx_list[-1]
    return spec


def transfer_density(m: DensityField, grid: UniformGrid, n_steps: int, T: float) -> np.ndarray:
    """Resample a density history onto a finer space-time mesh: linear in
    time, cubic (even reflection) in space."""
    x = grid.points()
    t = np.linspace(0.0, T, n_steps + 1)
    pos = np.clip(t / m.dt, 0, m.n_steps)
    k0 = np.minimum(np.floor(pos).astype(int), m.n_steps - 1)
    theta = pos - k0
    spatial = interpolate_fields(m.values.reshape(m.n_steps + 1, -1), x, m.grid, "reflect")
    out = (1 - theta)[:, None] * spatial[k0] + theta[:, None] * spatial[k0 + 1]
    return out.reshape((n_steps + 1,) + grid.shape)


def reference_solution(cfg: StudyConfig, warm: Optional[DensityField] = None) -> ReferenceSolution:
    """Fine-grid local-coupling solve, loaded from the cache when available."""
    spec = reference_spec(cfg)
    key = config_hash(spec)[:16]
    path = Path(cfg.cache_dir) / f"local-1d-reference-{key}.npz"
    grid = _grid(cfg, cfg.ref_dx)
    if path.exists():
        log.info("loading cached reference %s", path)
        with np.load(path, allow_pickle=False) as data:
            record = RunRecord(**json.loads(str(data["record"])))
            return ReferenceSolution(grid, data["v0"].reshape(grid.shape), data["m_T"].reshape(grid.shape), record)
    problem = build_problem(cfg, cfg.ref_dx, (cfg.ref_dt_c, cfg.ref_dt_gamma))
    init = None
    if cfg.ref_warm_start and warm is not None:
        init = transfer_density(warm, problem.grid, problem.n_steps, cfg.T)
    log.info("computing reference: dx=%r, %d steps", problem.grid.dx, problem.n_steps)
    t0 = time.perf_counter()
    sol = mfg_solve(problem, initial_density=init)
    wall = time.perf_counter() - t0
    record = _record(problem.grid.dx, problem.dt, problem.n_steps, sol.m, wall, sol.iterations,
                     sol.converged, float(np.max(sol.v.control_ratio)), sol.max_increments)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, v0=sol.v[0], m_T=sol.m[-1], record=json.dumps(dataclasses.asdict(record)),
             spec=json.dumps(spec, sort_keys=True, default=repr))
    os.replace(tmp, path)
    return ReferenceSolution(grid, np.array(sol.v[0]), np.array(sol.m[-1]), record)


# --------------------------------------------------------------------------
# studies


def _ou_row(cfg: StudyConfig, dx: float):
    grid = _grid(cfg, dx)
    dt, n = time_steps(cfg.T, grid.dx, cfg.dt_c, cfg.dt_gamma)
    m0 = lambda x: ou_density(0.0, x[..., 0], cfg.mu0, cfg.sigma0, cfg.sigma)
    problem = FPProblem(DriftFunction(lambda t, x: -x), cfg.sigma, m0, grid, dt, n, boundary="dirichlet")
    t0 = time.perf_counter()
    m = fp_solve(problem)
    wall = time.perf_counter() - t0
    x = grid.points()[:, 0]
    truth = {"m": ou_density(cfg.T, x, cfg.mu0, cfg.sigma0, cfg.sigma)}
    approx = {"m": m[-1].ravel()}
    plot = {"x": grid.points(), "m_T": approx["m"], "m_exact_T": truth["m"],
            "v_0": np.full(grid.size, np.nan), "v_exact_0": np.full(grid.size, np.nan)}
    return grid, approx, truth, _record(grid.dx, dt, n, m, wall), plot


def _lq_truth(cfg: StudyConfig, grid: UniformGrid) -> dict:
    params = lq_params(cfg)
    x = grid.points()
    return {"v": exact_value(0.0, x, params), "dv": exact_gradient(0.0, x, params)[:, 0],
            "m": exact_density(cfg.T, x, params)}


def _coupled_row(cfg: StudyConfig, dx: float):
    problem = build_problem(cfg, dx)
    grid = problem.grid
    t0 = time.perf_counter()
    sol = mfg_solve(problem)
    wall = time.perf_counter() - t0
    bc = problem.hjb_bc
    approx = {"v": sol.v[0].ravel(), "dv": numerical_gradient(sol.v[0], grid, bc)[..., 0].ravel(),
              "m": sol.m[-1].ravel()}
    record = _record(grid.dx, problem.dt, problem.n_steps, sol.m, wall, sol.iterations, sol.converged,
                     float(np.max(sol.v.control_ratio)), sol.max_increments)
    if not sol.converged:
        log.warning("dx=%r: fixed point not converged after %d iterations", dx, sol.iterations)
    return grid, approx, record, sol


def fields_for(test: str) -> tuple:
    if test == "fp-only-ou":
        return ("m",)
    return ("v", "dv", "m")


def run_study(cfg: StudyConfig) -> ConvergenceReport:
    """Solve at every ``dx`` of the study, compare against the truth and collect rows."""
    names = fields_for(cfg.test)
    rows = {name: [] for name in names}
    runs, plot, reference = [], None, None
    pending = []  # local-1d rows wait for the reference
    last_density = None
    for dx in cfg.dx_list:
        log.info("%s: dx=%r", cfg.test, dx)
        try:
            if cfg.test == "fp-only-ou":
                grid, approx, truth, record, row_plot = _ou_row(cfg, dx)
            else:
                grid, approx, record, sol = _coupled_row(cfg, dx)
                last_density = sol.m
                truth = _lq_truth(cfg, grid) if cfg.test != "local-1d" else None
                row_plot = {"x": grid.points(), "m_T": approx["m"], "v_0": approx["v"]}
        except Exception as exc:  # a failed row is recorded and the study moves on
            log.exception("dx=%r failed", dx)
            grid = _grid(cfg, dx)
            dt, n = time_steps(cfg.T, grid.dx, cfg.dt_c, cfg.dt_gamma)
            runs.append(RunRecord(dx=dx, dt=dt, n_steps=n, failed=f"{type(exc).__name__}: {exc}"))
            for name in names:
                rows[name].append(ReportRow(dx=dx, dt=dt, failed=FAILED))
            continue
        runs.append(record)
        pending.append((len(runs) - 1, grid, approx, truth, row_plot))

    if cfg.test == "local-1d" and pending:
        ref = reference_solution(cfg, last_density)
        reference = ref.record
        pending = [(i, g, a, ref.sample(g), p) for i, g, a, _, p in pending]

    by_index = {i: (g, a, t, p) for i, g, a, t, p in pending}
    for i, record in enumerate(runs):
        if i not in by_index:
            continue
        grid, approx, truth, row_plot = by_index[i]
        for name in names:
            e = error_metrics(approx[name], truth[name], grid)
            rows[name].insert(_row_position(rows[name], record.dx), ReportRow(
                dx=record.dx, dt=record.dt, e_inf=e.e_inf, e_2=e.e_2,
                positivity_error=record.positivity_error, iterations=record.iterations,
                wall_time_s=record.wall_time_s))
        if cfg.test != "fp-only-ou":
            row_plot = dict(row_plot, m_exact_T=truth["m"], v_exact_0=truth["v"])
        plot = row_plot
    for name in names:
        _fill_rates(rows[name])
    return ConvergenceReport(cfg, rows, runs, plot, reference)


def _row_position(rows: list, dx: float) -> int:
    """Keep rows ordered by decreasing dx (failed rows were appended earlier)."""
    return sum(1 for r in rows if r.dx > dx)


# --------------------------------------------------------------------------
# output


def format_number(value) -> str:
    """Round-trip decimal for floats, plain text for ints, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows:
            if r.failed:
                writer.writerow([format_number(r.dx), format_number(r.dt), r.failed] + [""] * 6)
                continue
            writer.writerow([format_number(getattr(r, name)) for name in CSV_HEADER])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_plot_data(plot: dict, path) -> None:
    x = np.asarray(plot["x"], dtype=float).reshape(len(plot["m_T"]), -1)
    xcols = ["x"] if x.shape[1] == 1 else [f"x{j + 1}" for j in range(x.shape[1])]
    cols = [x[:, j] for j in range(x.shape[1])] + [np.ravel(plot[c]) for c in PLOT_COLUMNS]
    with open(path, "w") as fh:
        fh.write("# " + " ".join(xcols + list(PLOT_COLUMNS)) + "\n")
        for vals in zip(*cols):
            fh.write(" ".join(format_number(v) for v in vals) + "\n")


def manifest(report: ConvergenceReport) -> dict:
    cfg = report.config.to_dict()
    import scipy

    return {
        "test": report.test,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "versions": {"mfglg": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "runs": [dataclasses.asdict(r) for r in report.runs],
        "reference": dataclasses.asdict(report.reference) if report.reference else None,
        "reference_spec_hash": config_hash(reference_spec(report.config))[:16] if report.test == "local-1d" else None,
    }


def emit_report(report: ConvergenceReport, out_dir) -> list[Path]:
    """Write one CSV per field, the plot data of the finest run and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in report.fields.items():
        path = out / f"{report.test}_{name}.csv"
        write_csv(rows, path)
        paths.append(path)
    if report.plot is not None:
        path = out / f"{report.test}_plot.dat"
        write_plot_data(report.plot, path)
        paths.append(path)
    path = out / f"{report.test}_manifest.json"
    path.write_text(json.dumps(manifest(report), indent=2, sort_keys=True, default=repr) + "\n")
    paths.append(path)
    return paths


def format_table(report: ConvergenceReport) -> str:
    """Human-readable summary in the layout of the CSV files."""
    lines = []
    for name, rows in report.fields.items():
        lines.append(f"[{report.test}] {name}")
        lines.append("  {:>10} {:>10} {:>10} {:>10} {:>6} {:>6} {:>10} {:>4}".format(
            "dx", "dt", "E_inf", "E_2", "p_inf", "p_2", "pos.err", "it"))
        for r in rows:
            if r.failed:
                lines.append(f"  {r.dx:10.3e} {r.dt:10.3e} {'FAILED':>10}")
                continue
            p = lambda v: f"{v:6.2f}" if v is not None else f"{'-':>6}"
            lines.append(f"  {r.dx:10.3e} {r.dt:10.3e} {r.e_inf:10.3e} {r.e_2:10.3e} {p(r.p_inf)} {p(r.p_2)} "
                         f"{r.positivity_error:10.3e} {r.iterations:4d}")
    return "\n".join(lines)
