"""Method-of-lines evolution of extended systems on periodic grids.

The semi-discrete system is ``u_t = -sum_j A_j D_j u - sigma P_Z u + (M.n)^-1 J``
with ``A_j = (M.n)^-1 M.e_j`` for the spatial coordinate covectors ``e_j``
of the standard frame, ``D_j`` central differences of order 2 or 4 on
``[0, 2 pi)^dims`` and ``P_Z`` the projection onto the ``Z`` rows.  Time
stepping is classical RK4.  Fields are stored as arrays of shape
``(components, nx, ny)`` with ``ny = 1`` in one dimension.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import NoCoherentPulse, SimulationBlowUp, UncertifiedExtension, UnknownKind
from .extension import ExtendedSymbol, characteristic_speeds, check_strong_hyperbolicity
from .pencil import staircase_decompose, MatrixPencil
from .symbol import Frame, constraint_at, symbol_at

DOMAIN_LENGTH = 2 * np.pi
IC_KINDS = ("constrained_wave", "violating_pulse")
MIN_PULSE_RECORDS = 20


@dataclass(frozen=True)
class GridSpec:
    """Periodic box ``[0, 2 pi)^spatial_dims`` with ``points`` per dimension."""

    spatial_dims: int = 1
    points: int = 128
    cfl: float = 0.25
    fd_order: int = 4
    t_final: float = 1.0

    def __post_init__(self):
        if self.spatial_dims not in (1, 2):
            raise ValueError("spatial_dims must be 1 or 2")
        if int(self.points) != self.points or self.points < 16:
            raise ValueError("points per dimension must be an integer >= 16")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.fd_order not in (2, 4):
            raise ValueError("fd_order must be 2 or 4")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")

    @property
    def h(self) -> float:
        return DOMAIN_LENGTH / self.points

    @property
    def shape(self) -> tuple[int, int]:
        return (self.points, self.points if self.spatial_dims == 2 else 1)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.spatial_dims

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.points) * self.h
        if self.spatial_dims == 1:
            return x[:, None], np.zeros((self.points, 1))
        return np.meshgrid(x, x, indexing="ij")

    def time_step(self, v_max: float) -> tuple[float, int]:
        """``dt <= cfl h / v_max``, shortened so that ``t_final`` is hit exactly."""
        steps = max(1, math.ceil(self.t_final * v_max / (self.cfl * self.h) - 1e-12))
        return self.t_final / steps, steps

    def to_dict(self) -> dict:
        return {"spatial_dims": self.spatial_dims, "points": self.points, "cfl": self.cfl,
                "fd_order": self.fd_order, "t_final": self.t_final}


@dataclass
class FieldState:
    phi: np.ndarray
    z: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.phi = np.ascontiguousarray(self.phi, dtype=float)
        self.z = np.ascontiguousarray(self.z, dtype=float)
        if self.phi.ndim != 3 or self.z.ndim != 3 or self.phi.shape[1:] != self.z.shape[1:]:
            raise ValueError("phi and z must be (components, nx, ny) arrays on the same grid")
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.z))):
            raise SimulationBlowUp("state contains non-finite values")

    def stacked(self) -> np.ndarray:
        return np.ascontiguousarray(np.concatenate([self.phi, self.z]))

    @classmethod
    def from_stacked(cls, u: np.ndarray, num_vars: int, time: float, meta=None) -> "FieldState":
        return cls(u[:num_vars].copy(), u[num_vars:].copy(), time, dict(meta or {}))


@dataclass
class DiagnosticsSeries:
    """One record per accepted step, including the initial data."""

    times: list = field(default_factory=list)
    z_l2: list = field(default_factory=list)
    z_linf: list = field(default_factory=list)
    psi_l2: list = field(default_factory=list)
    psi_linf: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    peaks: list = field(default_factory=list)
    pulse: dict | None = None

    def __len__(self):
        return len(self.times)

    def max_z_linf(self) -> np.ndarray:
        return np.max(np.asarray(self.z_linf), axis=0)

    def append(self, t, zl2, zinf, pl2, pinf, energy, peaks):
        if self.times and t <= self.times[-1]:
            raise ValueError("time stamps must increase")
        self.times.append(float(t))
        self.z_l2.append(zl2)
        self.z_linf.append(zinf)
        self.psi_l2.append(pl2)
        self.psi_linf.append(pinf)
        self.energy.append(float(energy))
        self.peaks.append(peaks)

    def summary(self) -> dict:
        e = np.asarray(self.energy)
        return {
            "steps": len(self) - 1,
            "t_final": self.times[-1],
            "max_z_l2": np.max(np.asarray(self.z_l2), axis=0).tolist(),
            "max_z_linf": self.max_z_linf().tolist(),
            "max_psi_l2": np.max(np.asarray(self.psi_l2), axis=0).tolist(),
            "energy_initial": float(e[0]),
            "energy_final": float(e[-1]),
            "energy_growth": float(e[-1] / e[0] - 1) if e[0] > 0 else None,
        }


# --------------------------------------------------------------------------- operators

class _Operator:
    """Constant matrices of the semi-discrete system for one extension and grid."""

    def __init__(self, ext: ExtendedSymbol, grid: GridSpec, damping: float, source=None):
        self.ext = ext
        self.grid = grid
        sys = ext.base
        self.frame = Frame.standard(sys.n_dim)
        self.dirs = [self.frame.k_basis[j] for j in range(grid.spatial_dims)]
        mn0 = ext.matrix_at(self.frame.n_cov)
        self.amats = np.ascontiguousarray(
            [np.linalg.solve(mn0, ext.matrix_at(e)) for e in self.dirs])
        self.num_vars = sys.num_vars
        self.damping = np.zeros(ext.size)
        self.damping[sys.num_vars:] = damping
        src = np.zeros(ext.size) if source is None else np.asarray(source, dtype=float)
        self.source = np.ascontiguousarray(np.linalg.solve(mn0, src))
        self.inv_h = np.full(grid.spatial_dims, 1.0 / grid.h)
        self.psi_rows = psi_operators(sys, self.frame, grid.spatial_dims)

    def rhs(self, u, out):
        kernels.rhs(u, self.amats, self.inv_h, self.grid.fd_order, self.damping, self.source, out)
        return out


def psi_operators(sys, frame: Frame, dims: int) -> np.ndarray:
    """``(C.n)(N.e_j)`` per spatial axis, rows scaled to unit largest coefficient."""
    cn = constraint_at(sys, frame.n_cov)
    rows = np.array([cn @ symbol_at(sys, frame.k_basis[j]) for j in range(dims)])
    for g in range(rows.shape[1]):
        flat = rows[:, g, :].ravel()
        pivot = flat[np.argmax(np.abs(flat))]
        if pivot != 0:
            rows[:, g, :] /= pivot
    return rows


def _constraints(phi, psi_rows, grid: GridSpec) -> np.ndarray:
    out = 0.0
    for j in range(grid.spatial_dims):
        dphi = kernels.derivative(phi, j, 1.0 / grid.h, grid.fd_order)
        out = out + np.einsum("ga,aij->gij", psi_rows[j], dphi)
    return out


def _l2(arr, vol):
    return np.sqrt(vol * np.sum(arr.reshape(arr.shape[0], -1) ** 2, axis=1))


def constraint_monitor(ext_or_sys, state: FieldState, grid: GridSpec) -> dict:
    """Discrete analytic constraints ``psi`` with the evolution stencil: L2 and Linf norms."""
    sys = getattr(ext_or_sys, "base", ext_or_sys)
    frame = Frame.standard(sys.n_dim)
    psi = _constraints(state.phi, psi_operators(sys, frame, grid.spatial_dims), grid)
    return {"l2": _l2(psi, grid.cell_volume).tolist(),
            "linf": np.max(np.abs(psi).reshape(psi.shape[0], -1), axis=1).tolist(),
            "field": psi}


def max_speed(ext: ExtendedSymbol, dims: int, count: int = 32) -> float:
    frame = Frame.standard(ext.base.n_dim)
    return max(max(abs(s) for s in characteristic_speeds(ext, frame, k))
               for k in planar_directions(frame, dims, count))


def planar_directions(frame: Frame, dims: int, count: int = 32) -> list:
    if dims == 1:
        return [frame.k_basis[0], -frame.k_basis[0]]
    ang = 2 * np.pi * np.arange(count) / count
    return [np.cos(a) * frame.k_basis[0] + np.sin(a) * frame.k_basis[1] for a in ang]


# --------------------------------------------------------------------------- initial data

def physical_mode(sys, frame: Frame, k) -> tuple[float, np.ndarray]:
    """Largest physical eigenvalue at ``k`` and a deterministic eigenvector for it."""
    an, ak = symbol_at(sys, frame.n_cov), symbol_at(sys, k)
    inv, _ = staircase_decompose(MatrixPencil(an, ak))
    lam, _, geom = max(inv.eigenvalue_table(), key=lambda row: np.real(row[0]))
    lam = float(np.real(lam))
    _, _, vh = np.linalg.svd(lam * an + ak)
    basis = vh[-geom:].T
    proj = basis @ basis.T
    v = proj[:, int(np.argmax(np.linalg.norm(proj, axis=0)))]
    v = v / np.linalg.norm(v)
    return lam, v * np.sign(v[np.argmax(np.abs(v))])


def make_initial_data(kind: str, ext: ExtendedSymbol, grid: GridSpec, params: dict | None = None
                      ) -> FieldState:
    """Constraint-satisfying plane wave or a Gaussian constraint violation, Z = 0.

    ``constrained_wave`` params: ``wave_vector`` (integers, default along x)
    and ``amplitude`` (1.0).  ``violating_pulse`` params: ``amplitude``
    (1e-3), ``width`` (0.3), ``center`` (pi) and ``constraint``, the index
    of the violated constraint (the last one by default: div B / div b).
    """
    params = dict(params or {})
    sys = ext.base
    frame = Frame.standard(sys.n_dim)
    x, y = grid.coordinates()
    nx, ny = grid.shape
    phi = np.zeros((sys.num_vars, nx, ny))
    z = np.zeros((sys.num_constraints, nx, ny))
    if kind == "constrained_wave":
        wv = np.asarray(params.get("wave_vector", (1,) + (0,) * (grid.spatial_dims - 1)), dtype=float)
        if wv.size != grid.spatial_dims or np.any(wv != np.round(wv)) or not np.any(wv):
            raise ValueError("wave_vector needs one nonzero integer component per dimension")
        amp = float(params.get("amplitude", 1.0))
        k = sum(wv[j] * frame.k_basis[j] for j in range(grid.spatial_dims))
        lam, v = physical_mode(sys, frame, k)
        phase = wv[0] * x + (wv[1] * y if grid.spatial_dims == 2 else 0.0)
        phi = amp * v[:, None, None] * np.cos(phase)[None]
        meta = {"kind": kind, "wave_vector": wv.tolist(), "amplitude": amp, "eigenvalue": lam}
    elif kind == "violating_pulse":
        amp = float(params.get("amplitude", 1e-3))
        width = float(params.get("width", 0.3))
        x0 = float(params.get("center", np.pi))
        target = int(params.get("constraint", sys.num_constraints - 1))
        r2 = (x - x0) ** 2 + ((y - x0) ** 2 if grid.spatial_dims == 2 else 0.0)
        chi = amp * np.exp(-r2 / width ** 2)
        grads = [-2 * (x - x0) / width ** 2 * chi, -2 * (y - x0) / width ** 2 * chi]
        rows = psi_operators(sys, frame, grid.spatial_dims)
        for j in range(grid.spatial_dims):
            rhs = np.zeros(sys.num_constraints)
            rhs[target] = 1.0
            b_j = np.linalg.lstsq(rows[j], rhs, rcond=None)[0]
            phi += b_j[:, None, None] * grads[j][None]
        meta = {"kind": kind, "amplitude": amp, "width": width, "center": x0,
                "constraint": target}
    else:
        raise UnknownKind(f"unknown initial data kind {kind!r}; choose from {IC_KINDS}")
    return FieldState(phi, z, 0.0, meta)


# --------------------------------------------------------------------------- evolution

def _peak_positions(z, pulse, grid: GridSpec) -> list:
    """Position of the largest ``|Z|`` in the forward half-domain, quadratic refinement."""
    x0, h, length = pulse["center"], grid.h, DOMAIN_LENGTH
    jy = int(round(x0 / h)) % grid.shape[1] if grid.spatial_dims == 2 else 0
    idx = np.arange(grid.points)
    ahead = np.mod(idx * h - x0, length)
    fwd = np.flatnonzero(ahead < length / 2)
    out = []
    for g in range(z.shape[0]):
        line = np.abs(z[g, :, jy])
        i = fwd[int(np.argmax(line[fwd]))]
        fm, f0, fp = line[(i - 1) % grid.points], line[i], line[(i + 1) % grid.points]
        denom = fm - 2 * f0 + fp
        shift = 0.5 * (fm - fp) / denom if denom < 0 else 0.0
        out.append(float(np.mod(x0 + ahead[i] + shift * h, length)) if f0 > 0 else float("nan"))
    return out


def evolve(ext: ExtendedSymbol, grid: GridSpec, state0: FieldState, damping: float | None = None,
           force: bool = False, source=None, v_max: float | None = None
           ) -> tuple[DiagnosticsSeries, FieldState]:
    """RK4 evolution to ``grid.t_final``; diagnostics after every step.

    The extension is certified on directions in the grid plane first;
    ``force`` runs it anyway (for demonstrating rejected extensions).
    """
    frame = Frame.standard(ext.base.n_dim)
    if not force:
        rep = check_strong_hyperbolicity(ext, frame,
                                         directions=planar_directions(frame, grid.spatial_dims))
        if rep.verdict != "strongly_hyperbolic":
            raise UncertifiedExtension(f"extension is {rep.verdict}; pass force=True to run anyway")
    if state0.phi.shape[1:] != grid.shape:
        raise ValueError(f"state grid {state0.phi.shape[1:]} does not match {grid.shape}")
    sigma = ext.spec.damping if damping is None else float(damping)
    op = _Operator(ext, grid, sigma, source)
    v_max = v_max or max_speed(ext, grid.spatial_dims)
    dt, steps = grid.time_step(v_max)
    pulse = None
    if state0.meta.get("kind") == "violating_pulse":
        pulse = {"center": state0.meta["center"], "width": state0.meta["width"],
                 "length": DOMAIN_LENGTH, "h": grid.h}
    series = DiagnosticsSeries(pulse=pulse)
    vol = grid.cell_volume
    nv = op.num_vars

    def record(u, t):
        zpart = u[nv:]
        psi = _constraints(np.ascontiguousarray(u[:nv]), op.psi_rows, grid)
        flat = zpart.reshape(zpart.shape[0], -1)
        peaks = _peak_positions(zpart, pulse, grid) if pulse else []
        series.append(t, _l2(zpart, vol).tolist(), np.max(np.abs(flat), axis=1).tolist(),
                      _l2(psi, vol).tolist(),
                      np.max(np.abs(psi).reshape(psi.shape[0], -1), axis=1).tolist(),
                      0.5 * vol * float(np.sum(u * u)), peaks)

    u = state0.stacked()
    t0 = state0.time
    k1, k2, k3, k4 = (np.empty_like(u) for _ in range(4))
    tmp = np.empty_like(u)
    record(u, t0)
    for step in range(1, steps + 1):
        op.rhs(u, k1)
        np.multiply(k1, 0.5 * dt, out=tmp); tmp += u
        op.rhs(tmp, k2)
        np.multiply(k2, 0.5 * dt, out=tmp); tmp += u
        op.rhs(tmp, k3)
        np.multiply(k3, dt, out=tmp); tmp += u
        op.rhs(tmp, k4)
        k2 += k3
        k1 += 2 * k2
        k1 += k4
        u += (dt / 6.0) * k1
        if not np.isfinite(np.sum(u * u)):
            raise SimulationBlowUp(f"non-finite values at step {step}", step=step,
                                   history=list(series.energy))
        record(u, t0 + step * dt)
    final = FieldState.from_stacked(u, nv, t0 + steps * dt, state0.meta)
    return series, final


# --------------------------------------------------------------------------- measurements

@dataclass
class SpeedEstimate:
    speed: float
    stderr: float
    points: int

    def to_dict(self) -> dict:
        return {"speed": self.speed, "stderr": self.stderr, "points": self.points}


def measure_pulse_speed(series: DiagnosticsSeries, component: int | None = None) -> SpeedEstimate:
    """Least-squares slope of peak distance against time, with its standard error.

    Records up to the point where the pulse nears the half-domain (and
    would meet its periodic image) are used; the initial overlap with
    the source region is discarded when enough records remain.
    """
    if series.pulse is None or not series.peaks or not series.peaks[0]:
        raise NoCoherentPulse("series carries no pulse-peak positions")
    p = series.pulse
    if component is None:
        component = int(np.argmax(series.max_z_linf()))
    t = np.asarray(series.times)
    pos = np.array([pk[component] for pk in series.peaks])
    ok = np.isfinite(pos)
    t, pos = t[ok], pos[ok]
    dist = np.mod(pos - p["center"], p["length"])
    width = p["width"]
    before_wrap = np.flatnonzero(dist >= p["length"] / 2 - 3 * width)
    stop = before_wrap[0] if before_wrap.size else dist.size
    t, dist = t[:stop], dist[:stop]
    clear = dist > 3 * width
    if np.count_nonzero(clear) >= MIN_PULSE_RECORDS:
        first = int(np.argmax(clear))
        t, dist = t[first:], dist[first:]
    if dist.size < MIN_PULSE_RECORDS:
        raise NoCoherentPulse(f"only {dist.size} usable peak records (need {MIN_PULSE_RECORDS})")
    if np.any(np.diff(dist) < -0.5 * p["h"]):
        raise NoCoherentPulse("peak positions move backwards beyond half a grid cell")
    design = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(design, dist, rcond=None)
    resid = dist - design @ coef
    dof = max(dist.size - 2, 1)
    sxx = np.sum((t - t.mean()) ** 2)
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / sxx)) if sxx > 0 else float("inf")
    return SpeedEstimate(float(coef[0]), stderr, int(dist.size))


@dataclass
class RefinementResult:
    points: list
    max_z_linf: list
    order: float

    def to_dict(self) -> dict:
        return {"points": self.points, "max_z_linf": self.max_z_linf,
                "order": self.order if math.isfinite(self.order) else None}


def refinement_study(ext: ExtendedSymbol, points: Sequence[int] = (32, 64, 128), spatial_dims: int = 2,
                     cfl: float = 0.25, fd_order: int = 4, t_final: float = 2 * np.pi,
                     wave_vector=(1, 2), amplitude: float = 1.0, damping: float | None = None,
                     force: bool = False) -> RefinementResult:
    """Convergence order of ``max_t Linf(Z)`` for constrained plane-wave data.

    An oblique wave vector is the default: along a grid axis the discrete
    wave stays exactly constraint-satisfying and Z is pure roundoff.
    """
    errs = []
    wv = tuple(wave_vector)[:spatial_dims]
    for n in points:
        grid = GridSpec(spatial_dims, int(n), cfl, fd_order, t_final)
        s0 = make_initial_data("constrained_wave", ext, grid,
                               {"wave_vector": wv, "amplitude": amplitude})
        series, _ = evolve(ext, grid, s0, damping, force)
        errs.append(float(np.max(series.max_z_linf())))
    hs = np.log(DOMAIN_LENGTH / np.asarray(points, dtype=float))
    if min(errs) > 0:
        order = float(np.polyfit(hs, np.log(errs), 1)[0])
    else:
        order = float("nan")            # Z identically zero: nothing to converge
    return RefinementResult([int(n) for n in points], errs, order)


# --------------------------------------------------------------------------- output

def write_diagnostics_csv(series: DiagnosticsSeries, path) -> None:
    """Header ``time,z1_l2,z1_linf,...,psi1_l2,...,energy,peak_pos_z1,...``."""
    nz = len(series.z_l2[0])
    npsi = len(series.psi_l2[0])
    header = ["time"]
    for g in range(nz):
        header += [f"z{g + 1}_l2", f"z{g + 1}_linf"]
    header += [f"psi{g + 1}_l2" for g in range(npsi)]
    header += ["energy"] + [f"peak_pos_z{g + 1}" for g in range(nz)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(series.times):
            row = [repr(t)]
            for g in range(nz):
                row += [repr(series.z_l2[i][g]), repr(series.z_linf[i][g])]
            row += [repr(v) for v in series.psi_l2[i]]
            row.append(repr(series.energy[i]))
            peaks = series.peaks[i] or [float("nan")] * nz
            row += [repr(v) for v in peaks]
            w.writerow(row)


def dump_state(state: FieldState, path, var_names: Sequence[str] = ()) -> Path:
    """Raw little-endian float64 ``[phi; z]`` in C order plus a ``.json`` sidecar."""
    path = Path(path)
    u = state.stacked()
    u.astype("<f8").tofile(path)
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps({
        "dtype": "<f8", "order": "C", "shape": list(u.shape), "time": state.time,
        "num_vars": int(state.phi.shape[0]), "num_constraints": int(state.z.shape[0]),
        "components": list(var_names), "layout": "(component, x, y)"}, indent=2))
    return sidecar


def load_state(path) -> FieldState:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    u = np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])
    return FieldState.from_stacked(u.astype(float), meta["num_vars"], meta["time"])
