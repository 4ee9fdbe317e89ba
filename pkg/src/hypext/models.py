"""The two worked examples: Maxwell electrodynamics and a toy MHD induction system.

Maxwell variables are the six components of ``F^{ab}`` enumerated as
``(F^01, F^02, F^03, F^23, F^31, F^12)``; equations are ``d_a F^{ab}``
(4 rows) followed by the dual Bianchi identity ``d_a (*F)^{da}`` with
``(*F)^{da} = 1/2 eps^{dabc} F_bc`` (4 rows).  The orientation is
``eps^{0123} = +(-det g_ab)^{-1/2}``.

The toy MHD variables are the three components of ``b`` in a
``g``-orthonormal triad completing the flow ``u``, so ``u.b = 0`` holds by
construction.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ComplexRoots, DimensionMismatch, SignatureError
from .symbol import Frame, SystemDefinition

MAXWELL_PAIRS = ((0, 1), (0, 2), (0, 3), (2, 3), (3, 1), (1, 2))
MAXWELL_VAR_NAMES = ("F01", "F02", "F03", "F23", "F31", "F12")
MODEL_NAMES = ("maxwell", "toy_mhd")


@dataclass(frozen=True)
class LorentzMetric:
    """Inverse metric components ``g^{ab}`` of signature ``(-, +, ..., +)``."""

    inverse_components: np.ndarray

    def __post_init__(self):
        g = np.array(self.inverse_components, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DimensionMismatch("metric must be a square matrix")
        if np.max(np.abs(g - g.T)) > 1e-14:
            raise SignatureError("metric is not symmetric")
        ev = np.linalg.eigvalsh(g)
        scale = max(np.max(np.abs(ev)), 1e-300)
        neg = int(np.sum(ev < -1e-12 * scale))
        pos = int(np.sum(ev > 1e-12 * scale))
        if neg != 1 or pos != g.shape[0] - 1:
            raise SignatureError(f"metric is not Lorentzian: eigenvalues {ev}")
        g.setflags(write=False)
        object.__setattr__(self, "inverse_components", g)

    @classmethod
    def minkowski(cls, n_dim: int = 4, speed: float = 1.0) -> "LorentzMetric":
        """``diag(-1, c^2, ..., c^2)``: light cone ``|lam| = c |k|`` in the standard frame."""
        return cls(np.diag([-1.0] + [speed ** 2] * (n_dim - 1)))

    @property
    def n_dim(self) -> int:
        return self.inverse_components.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return np.linalg.inv(self.inverse_components)

    def contract(self, l1, l2) -> float:
        return float(np.asarray(l1) @ self.inverse_components @ np.asarray(l2))

    def null_roots(self, n, k) -> tuple[float, float]:
        """Both real roots ``lam`` of ``g^{ab} (lam n + k)_a (lam n + k)_b = 0``, ascending."""
        a = self.contract(n, n)
        b = 2 * self.contract(n, k)
        c = self.contract(k, k)
        disc = b * b - 4 * a * c
        if a == 0 or disc < 0:
            raise ComplexRoots(f"quadratic in lambda has no real roots (a={a}, disc={disc})")
        sq = np.sqrt(disc)
        # cancellation-free form
        q = -0.5 * (b + np.copysign(sq, b if b != 0 else 1.0))
        r1, r2 = q / a, (c / q if q != 0 else -q / a)
        return tuple(sorted((float(r1), float(r2))))


@dataclass(frozen=True)
class FlowField:
    """Unit timelike flow vector ``u^a`` (``g_ab u^a u^b = -1``)."""

    u_vec: np.ndarray
    metric: LorentzMetric

    def __post_init__(self):
        u = np.asarray(self.u_vec, dtype=float)
        norm = u @ self.metric.lower @ u
        if abs(norm + 1) > 1e-12:
            raise ValueError(f"flow must satisfy g(u, u) = -1, got {norm}")
        object.__setattr__(self, "u_vec", u)

    @property
    def covector(self) -> np.ndarray:
        return self.metric.lower @ self.u_vec

    def triad(self) -> np.ndarray:
        """Rows: a ``g``-orthonormal basis of the subspace orthogonal to ``u``."""
        gl = self.metric.lower
        basis = [self.u_vec]
        out = []
        for e in np.eye(self.u_vec.size):
            v = e.copy()
            for b in basis:
                v = v - (v @ gl @ b) / (b @ gl @ b) * b
            nv = v @ gl @ v
            if nv > 1e-10:
                v = v / np.sqrt(nv)
                basis.append(v)
                out.append(v)
            if len(out) == self.u_vec.size - 1:
                break
        return np.array(out)


def levi_civita(metric: LorentzMetric) -> np.ndarray:
    """Contravariant ``eps^{abcd}`` with ``eps^{0123} = +(-det g_ab)^{-1/2}``."""
    n = metric.n_dim
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        eps[perm] = -1.0 if inversions % 2 else 1.0
    return eps * np.sqrt(-np.linalg.det(metric.inverse_components))


def maxwell_system(g: LorentzMetric | None = None) -> SystemDefinition:
    g = g or LorentzMetric.minkowski()
    if g.n_dim != 4:
        raise DimensionMismatch("Maxwell model is four dimensional")
    gl = g.lower
    eps = levi_civita(g)
    sym = np.zeros((8, 4, 6))
    for w, (p, q) in enumerate(MAXWELL_PAIRS):
        lowered = np.outer(gl[:, p], gl[:, q])     # F_bc contribution of F^{pq}
        lowered = lowered - lowered.T
        for b in range(4):
            for a in range(4):
                sym[b, a, w] = (a == p) * (b == q) - (a == q) * (b == p)
        sym[4:, :, w] = 0.5 * np.einsum("dabc,bc->da", eps, lowered)
    cp = np.zeros((2, 4, 8))
    for b in range(4):
        cp[0, b, b] = 1.0
        cp[1, b, 4 + b] = 1.0
    return SystemDefinition("maxwell", sym, cp, condition3="analytic: satisfied",
                            var_names=MAXWELL_VAR_NAMES, check_kernel=True)


def maxwell_reduction(g: LorentzMetric, frame: Frame) -> np.ndarray:
    """The symmetric-hyperbolic reduction ``(g_q[r t_s], -3/2 eps_pars t^a)``.

    Rows are the lower antisymmetric pairs ``[rs]`` in the variable
    enumeration, columns the 8 Maxwell equations.
    """
    gl = g.lower
    t = frame.t_vec
    tl = gl @ t
    eps_lo = np.einsum("abcd,ai,bj,ck,dl->ijkl", levi_civita(g), gl, gl, gl, gl)
    h = np.zeros((6, 8))
    for w, (r, s) in enumerate(MAXWELL_PAIRS):
        h[w, :4] = 0.5 * (gl[:, r] * tl[s] - gl[:, s] * tl[r])
        h[w, 4:] = -1.5 * np.einsum("pa,a->p", eps_lo[:, :, r, s], t)
    return h


def toy_mhd_system(g: LorentzMetric | None = None, u: FlowField | None = None) -> SystemDefinition:
    g = g or LorentzMetric.minkowski()
    if g.n_dim != 4:
        raise DimensionMismatch("toy MHD model is four dimensional")
    u = u or FlowField(np.eye(4)[0], g)
    tri = u.triad()
    uv = u.u_vec
    # characteristic form: 1/2 (u.l db^b - u^b l.db)
    sym = 0.5 * (np.einsum("a,ib->bai", uv, tri) - np.einsum("b,ia->bai", uv, tri))
    cp = np.eye(4)[None, :, :].copy()
    return SystemDefinition("toy_mhd", sym, cp, condition3="analytic: satisfied",
                            var_names=("b1", "b2", "b3"), check_kernel=True)


def builtin_system(name: str) -> SystemDefinition:
    if name == "maxwell":
        return maxwell_system()
    if name == "toy_mhd":
        return toy_mhd_system()
    raise KeyError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


def default_speeds(name: str) -> tuple[float, ...]:
    return {"maxwell": (1.5, 2.0), "toy_mhd": (1.5,)}[name]


@dataclass
class OracleResult:
    speeds: list
    eigenvector_count: int


def characteristic_oracle(model: str, metrics: Sequence[LorentzMetric], frame: Frame, k,
                          flow: FlowField | None = None) -> OracleResult:
    """Analytic characteristic speeds of the covariant extensions.

    ``metrics`` is ``[g, g1, g2]`` for Maxwell and ``[g, g1]`` for the toy
    MHD model.  Each root is that of a quadratic ``g_i(lam n + k, lam n + k)``;
    the MHD physical root solves ``u^a (lam n + k)_a = 0`` twice.
    """
    n = frame.n_cov
    k = np.asarray(k, dtype=float)
    if model == "maxwell":
        g, g1, g2 = metrics
        speeds = list(g.null_roots(n, k)) * 2 + list(g1.null_roots(n, k)) + list(g2.null_roots(n, k))
    elif model == "toy_mhd":
        g, g1 = metrics
        flow = flow or FlowField(np.eye(4)[0], g)
        lam0 = -float(flow.u_vec @ k) / float(flow.u_vec @ n)
        speeds = [lam0, lam0] + list(g1.null_roots(n, k))
    else:
        raise KeyError(f"unknown model {model!r}")
    speeds = sorted(speeds)
    return OracleResult(speeds, len(speeds))
