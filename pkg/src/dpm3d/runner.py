"""Time loop, configuration and output files."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from . import decomposition, diagnostics, dpm, poisson
from .scheme import ModelParams, assemble_rhs, cfl_from_gradients, convection_term

log = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "SimState",
    "RunReport",
    "Simulation",
    "Gaussian",
    "init_state",
    "run",
    "write_timeseries",
    "read_timeseries",
    "write_snapshot",
    "read_snapshot",
    "parse_config_file",
    "CSV_HEADER",
    "SNAPSHOT_MAGIC",
]

CSV_HEADER = ["step", "t", "dt", "max_rho", "second_moment", "free_energy", "bep_residual", "clamp"]
SNAPSHOT_MAGIC = b"DPM3\x00\x00\x00\x00"
SNAPSHOT_VERSION = 1
MODES = ("sd", "dd-case1", "dd-case2")
TESTS = ("A", "B", "manufactured")

# harmonics, boundary order, interface harmonics per test
_TEST_DEFAULTS = {"A": (1, 1, 1), "B": (150, 0, 20), "manufactured": (1, 1, 1)}


@dataclass
class RunConfig:
    test: str = "A"
    mode: str = "sd"
    n: int = 36
    n1: int = 20
    n2: int = 20
    harmonics: int | None = None
    beta: int | None = None
    interface_harmonics: int | None = None
    t_final: float = 1e-6
    dt: float | None = None
    dt_cap_factor: float = 0.5
    out: str | None = None
    snapshot_every: int = 0
    threads: int | None = None
    blow_up_threshold: float = diagnostics.BLOW_UP_JUMP
    seed: int = 0
    chi: float = 1.0
    max_steps: int | None = None
    full_diagnostics: bool = True

    def __post_init__(self):
        if self.test not in TESTS:
            raise ValueError(f"unknown test {self.test!r}; expected one of {TESTS}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("n", "n1", "n2"):
            if int(getattr(self, name)) < 8:
                raise ValueError(f"{name} must be at least 8")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.dt_cap_factor > 0:
            raise ValueError("dt_cap_factor must be positive")
        h, b, zi = _TEST_DEFAULTS[self.test]
        if self.harmonics is None:
            self.harmonics = h
        if self.beta is None:
            self.beta = b
        if self.interface_harmonics is None:
            self.interface_harmonics = zi


@dataclass(frozen=True)
class Gaussian:
    """amp * exp(-alpha |x - center|^2)."""

    amp: float
    alpha: float
    center: tuple = (0.0, 0.0, 0.0)

    def __call__(self, x, y, z):
        cx, cy, cz = self.center
        return self.amp * np.exp(-self.alpha * ((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2))

    def cell_average(self, grid) -> np.ndarray:
        """Exact mean over each cell (the Gaussian factorises along the axes)."""
        s = math.sqrt(self.alpha)
        facs = []
        for a in range(3):
            lo = grid.cube_min[a] + np.arange(grid.n) * grid.h - self.center[a]
            hi = lo + grid.h
            facs.append(0.5 * math.sqrt(math.pi) / s * (erf(s * hi) - erf(s * lo)) / grid.h)
        return self.amp * facs[0][:, None, None] * facs[1][None, :, None] * facs[2][None, None, :]


class _Zero:
    def __call__(self, x, y, z):
        return np.zeros(np.broadcast(x, y, z).shape)

    def cell_average(self, grid):
        return np.zeros(grid.shape)


class _Sum:
    def __init__(self, parts):
        self.parts = parts

    def __call__(self, x, y, z):
        return sum(p(x, y, z) for p in self.parts)

    def cell_average(self, grid):
        return sum(p.cell_average(grid) for p in self.parts)


class _Const:
    def __init__(self, v):
        self.v = float(v)

    def __call__(self, x, y, z):
        return np.full(np.broadcast(x, y, z).shape, self.v)

    def cell_average(self, grid):
        return np.full(grid.shape, self.v)


def initial_data(config: RunConfig):
    """(rho0, c0) callables with ``cell_average`` for the configured test."""
    if config.test == "A":
        return Gaussian(1000.0, 100.0), Gaussian(500.0, 50.0)
    if config.test == "B":
        return Gaussian(2000.0, 100.0, (0.0, 0.0, 0.25)), _Zero()
    rng = np.random.default_rng(config.seed)
    bumps = [Gaussian(float(rng.uniform(0.1, 1.0)), float(rng.uniform(20, 60)),
                      tuple(rng.uniform(-0.2, 0.2, 3))) for _ in range(3)]
    return _Sum([_Const(1.0)] + bumps), _Const(1.0)


@dataclass
class SimState:
    t: float
    dt: float | None
    rho: list
    c: list
    max_rho: float
    step: int = 0


@dataclass
class RunReport:
    cause: str
    t: float
    steps: int
    records: list
    rebuilds: int
    wall_time: float
    state: SimState
    bracket: tuple | None = None
    min_values: list = field(default_factory=list)
    max_condition: float = 0.0


def build_setup(config: RunConfig):
    if config.mode == "sd":
        return decomposition.setup_single(config.n, config.harmonics, config.beta)
    if config.mode == "dd-case1":
        return decomposition.setup_case1(config.n1, config.n2, config.harmonics, config.beta,
                                         config.interface_harmonics)
    return decomposition.setup_case2(config.n1, config.n2, config.harmonics, config.beta,
                                     config.interface_harmonics)


def _density_values(sub, func, grid_values: np.ndarray, boundary_block: str = "boundary") -> np.ndarray:
    """Initial values on the density set, averaged where pieces overlap.

    Points attached to the outer boundary take ``func`` at their projection
    (two-term extension with zero normal derivative).  Interface points need
    no boundary condition and keep ``grid_values``.
    """
    vals = np.zeros(sub.support.size)
    flat_values = grid_values.reshape(-1)
    for p in sub.pieces:
        ip = sub.piece_positions(p)
        if p.block == boundary_block:
            x = p.geom.projection
            v = func(x[:, 0], x[:, 1], x[:, 2])
        else:
            v = flat_values[p.flat]
        vals[ip] += sub.weights[ip] * v
    return vals


def init_state(config: RunConfig, setup) -> SimState:
    """Cell averages of rho0 and point values of c0 on N+; on the part of the
    density set attached to the outer boundary both take the value at the
    projection onto the sphere."""
    rho0, c0 = initial_data(config)
    rhos, cs = [], []
    for sub in setup.subdomains:
        g = sub.grid
        x, y, z = g.axes()
        rho_all = rho0.cell_average(g)
        c_all = np.broadcast_to(c0(x, y, z), g.shape)
        rho = np.where(sub.cls.nplus, rho_all, 0.0)
        c = np.where(sub.cls.nplus, c_all, 0.0)
        rho.reshape(-1)[sub.support] = _density_values(sub, rho0, rho_all)
        c.reshape(-1)[sub.support] = _density_values(sub, c0, c_all)
        rhos.append(rho)
        cs.append(c)
    m = diagnostics.max_density(rhos, [s.cls.mplus for s in setup.subdomains])
    return SimState(t=0.0, dt=None, rho=rhos, c=cs, max_rho=m)


class Simulation:
    """Owns the geometry, the cached boundary equations and the current state."""

    def __init__(self, config: RunConfig, setup=None):
        self.config = config
        self.params = ModelParams(chi=config.chi)
        self.setup = setup if setup is not None else build_setup(config)
        self.state = init_state(config, self.setup)
        self.system: dpm.BepSystem | None = None
        self.rebuilds = 0
        self.max_condition = 0.0
        self.last_info: dpm.UpdateInfo | None = None

    @property
    def subdomains(self):
        return self.setup.subdomains

    def _choose_dt(self, gmaxes) -> float:
        cfg = self.config
        if cfg.dt is not None:
            return float(cfg.dt)
        cand = min(min(cfg.dt_cap_factor * s.h ** 2, cfl_from_gradients(gm, self.params.chi, s.h))
                   for s, gm in zip(self.subdomains, gmaxes))
        if self.state.dt is not None:
            cand = min(cand, self.state.dt)
        return cand

    def system_for(self, dt: float) -> dpm.BepSystem:
        if self.system is None or self.system.dt != dt:
            self.system = dpm.assemble_bep(self.subdomains, self.setup.layout, dt)
            self.rebuilds += 1
            self.max_condition = max(self.max_condition, self.system.condition)
        return self.system

    def step(self) -> dpm.UpdateInfo:
        st = self.state
        sources, gmaxes = [], []
        for sub, rho, c in zip(self.subdomains, st.rho, st.c):
            g, gm = convection_term(rho, c, self.params, sub.h, sub.cls.mplus, sub.cls.nplus,
                                    return_gradients=True)
            gmaxes.append(gm)
            sources.append(g)
        dt = self._choose_dt(gmaxes)
        rhs = []
        for g, rho, c in zip(sources, st.rho, st.c):
            f_rho, f_c = assemble_rhs(rho, c, g, dt, self.params)
            rhs.append(np.stack([f_rho, f_c]))
        system = self.system_for(dt)
        out, info = dpm.green_update(system, rhs)
        st.rho = [o[0] for o in out]
        st.c = [o[1] for o in out]
        st.step += 1
        st.t = st.step * dt if self.config.dt is not None else st.t + dt
        st.dt = dt
        self.last_info = info
        return info

    def masks(self):
        return [s.cls.mplus for s in self.subdomains]

    def grids(self):
        return [s.grid for s in self.subdomains]

    def record(self, info: dpm.UpdateInfo | None) -> diagnostics.TimeSeriesRecord:
        st = self.state
        m = diagnostics.max_density(st.rho, self.masks())
        if self.config.full_diagnostics:
            m2 = diagnostics.second_moment(st.rho, self.grids(), self.masks())
            fe = diagnostics.free_energy([np.maximum(r, 0.0) for r in st.rho], st.c,
                                         self.grids(), self.masks())
        else:
            m2 = fe = float("nan")
        return diagnostics.TimeSeriesRecord(
            step=st.step, t=st.t, dt=st.dt if st.dt is not None else 0.0, max_rho=m,
            second_moment=m2, free_energy=fe,
            bep_residual=info.residual if info else 0.0, clamp=info.clamp if info else 0.0)

    def min_values(self) -> tuple[float, float]:
        masks = [s.cls.nplus for s in self.subdomains]
        mr = min(float(r[m].min()) for r, m in zip(self.state.rho, masks))
        mc = min(float(c[m].min()) for c, m in zip(self.state.c, masks))
        return mr, mc

    def run(self, callback=None) -> RunReport:
        cfg = self.config
        t0 = time.perf_counter()
        records = [self.record(None)]
        mins = [self.min_values()]
        cause, bracket = "t_final", None
        nsteps = None
        if cfg.dt is not None:
            nsteps = int(round(cfg.t_final / cfg.dt))
        out_dir = Path(cfg.out) if cfg.out else None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
        try:
            while True:
                if nsteps is not None:
                    if self.state.step >= nsteps:
                        break
                elif self.state.t >= cfg.t_final * (1 - 1e-12):
                    break
                if cfg.max_steps is not None and self.state.step >= cfg.max_steps:
                    cause = "max_steps"
                    break
                prev = self.state.max_rho
                info = self.step()
                rec = self.record(info)
                self.state.max_rho = rec.max_rho
                records.append(rec)
                mins.append(self.min_values())
                if callback is not None:
                    callback(self, rec)
                if out_dir is not None and cfg.snapshot_every and self.state.step % cfg.snapshot_every == 0:
                    self.write_snapshots(out_dir)
                if not np.isfinite(rec.max_rho):
                    cause = "non_finite"
                    break
                if diagnostics.blow_up_check(rec.max_rho, prev, cfg.blow_up_threshold):
                    cause = "blow_up"
                    bracket = (records[-2].t, rec.t)
                    break
        except Exception:
            if out_dir is not None:
                write_timeseries(records, out_dir / "timeseries.csv")
            raise
        if out_dir is not None:
            write_timeseries(records, out_dir / "timeseries.csv")
            self.write_snapshots(out_dir)
        return RunReport(cause=cause, t=self.state.t, steps=self.state.step, records=records,
                         rebuilds=self.rebuilds, wall_time=time.perf_counter() - t0,
                         state=self.state, bracket=bracket, min_values=mins,
                         max_condition=self.max_condition)

    def write_snapshots(self, out_dir: Path):
        for sub, rho, c in zip(self.subdomains, self.state.rho, self.state.c):
            tag = f"{sub.name}_{self.state.step:07d}"
            write_snapshot(rho, sub.grid, out_dir / f"rho_{tag}.dpm3", self.state.t)
            write_snapshot(c, sub.grid, out_dir / f"c_{tag}.dpm3", self.state.t)


def run(config: RunConfig, callback=None) -> RunReport:
    if config.threads is not None:
        poisson.set_workers(config.threads)
    return Simulation(config).run(callback)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def write_timeseries(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for r in records:
            vals = [str(int(r.step))] + ["%.17g" % getattr(r, k) for k in CSV_HEADER[1:]]
            fh.write(",".join(vals) + "\n")


def read_timeseries(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [diagnostics.TimeSeriesRecord(step=int(r["step"]), **{k: float(r[k]) for k in CSV_HEADER[1:]})
            for r in rows]


def write_snapshot(values: np.ndarray, grid, path, t: float = 0.0) -> None:
    values = np.asarray(values, dtype="<f8")
    n = grid.n
    if values.shape != (n, n, n):
        raise ValueError("field shape does not match the grid")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IIdd", SNAPSHOT_VERSION, n, grid.h, t))
        fh.write(np.ascontiguousarray(values).tobytes())
    with open(path.with_suffix(path.suffix + ".txt"), "w") as fh:
        fh.write(f"format=DPM3\nversion={SNAPSHOT_VERSION}\nn={n}\nh={grid.h!r}\nt={t!r}\n"
                 f"center={grid.center}\ncube_min={grid.cube_min}\norder=C (j,k,l)\n"
                 "dtype=float64 little-endian\n")


def read_snapshot(path):
    """Return (values, n, h, t)."""
    data = Path(path).read_bytes()
    if data[:8] != SNAPSHOT_MAGIC:
        raise ValueError("not a DPM3 snapshot (bad magic)")
    version, n, h, t = struct.unpack("<IIdd", data[8:32])
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    body = data[32:]
    if len(body) != 8 * n ** 3:
        raise ValueError("snapshot payload has the wrong size")
    return np.frombuffer(body, dtype="<f8").reshape(n, n, n).copy(), n, h, t


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _convert(key: str, value: str):
    typ = str(_FIELD_TYPES[key])
    if value.lower() in ("none", ""):
        return None
    if "bool" in typ:
        return value.lower() in ("1", "true", "yes", "on")
    if "int" in typ and "float" not in typ:
        return int(value)
    if "float" in typ:
        return float(value)
    return value


def parse_config_file(path) -> dict:
    """Flat ``key = value`` file with ``#`` comments; keys may use dashes."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out
