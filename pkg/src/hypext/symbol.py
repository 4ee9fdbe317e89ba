"""Constrained first-order systems: principal symbols, structure counts, reductions.

A system is ``N[A][a][alpha] d_a phi^alpha = J^A`` with constant
coefficients, together with constraint projectors ``C[Gamma][a][A]``.  All
analysis happens in a :class:`Frame`: a time covector ``n``, a transversal
vector ``t`` with ``t.n = 1`` and a basis of spatial covectors ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import pencil as pc
from .errors import (
    Condition2Violation,
    DegenerateDirection,
    DimensionMismatch,
    RankDeficientTimeDirection,
    SystemDefinitionError,
)

KERNEL_TOL = 1e-12
DEGENERACY_ANGLE = 1e-6


@dataclass(frozen=True)
class SystemDefinition:
    """Constant-coefficient first-order system with its constraint projectors.

    ``symbol`` has shape ``(num_eqs, n_dim, num_vars)`` and
    ``constraint_proj`` shape ``(num_constraints, n_dim, num_eqs)``.
    Construction enforces ``num_eqs == num_vars + num_constraints``.  The
    kernel identity ``C^(a N^b) = 0`` is evaluated and stored in
    ``kernel_residual``; with ``check_kernel=True`` it is enforced.
    """

    name: str
    symbol: np.ndarray
    constraint_proj: np.ndarray
    source: np.ndarray | None = None
    condition3: str = "unverified"
    var_names: tuple = ()
    check_kernel: bool = False
    kernel_residual: float = field(init=False, default=0.0)

    def __post_init__(self):
        sym = np.array(self.symbol, dtype=float)
        cp = np.array(self.constraint_proj, dtype=float)
        if sym.ndim != 3:
            raise DimensionMismatch(f"symbol must be a rank-3 array, got shape {sym.shape}")
        ne, nd, nv = sym.shape
        if nd < 2:
            raise DimensionMismatch("n_dim must be at least 2")
        if cp.ndim != 3 or cp.shape[1:] != (nd, ne):
            raise DimensionMismatch(
                f"constraint_proj must have shape (num_constraints, {nd}, {ne}), got {cp.shape}")
        ng = cp.shape[0]
        if ne != nv + ng:
            raise SystemDefinitionError(
                f"|A| = |alpha| + |Gamma| violated: {ne} equations, {nv} variables, {ng} constraints")
        src = np.zeros(ne) if self.source is None else np.array(self.source, dtype=float)
        if src.shape != (ne,):
            raise DimensionMismatch(f"source must have length {ne}")
        for arr in (sym, cp, src):
            if not np.all(np.isfinite(arr)):
                raise SystemDefinitionError("system tensors must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "symbol", sym)
        object.__setattr__(self, "constraint_proj", cp)
        object.__setattr__(self, "source", src)
        names = tuple(self.var_names) or tuple(f"phi{i}" for i in range(nv))
        object.__setattr__(self, "var_names", names)
        res = float(np.max(np.abs(symmetrized_kernel(sym, cp)), initial=0.0))
        object.__setattr__(self, "kernel_residual", res)
        if self.check_kernel and res > KERNEL_TOL:
            raise Condition2Violation(f"C^(a N^b) does not vanish: max entry {res:.3e}")

    @property
    def n_dim(self) -> int:
        return self.symbol.shape[1]

    @property
    def num_vars(self) -> int:
        return self.symbol.shape[2]

    @property
    def num_eqs(self) -> int:
        return self.symbol.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.constraint_proj.shape[0]

    def with_tensors(self, symbol=None, constraint_proj=None, name=None) -> "SystemDefinition":
        return SystemDefinition(
            name=name or self.name,
            symbol=self.symbol if symbol is None else symbol,
            constraint_proj=self.constraint_proj if constraint_proj is None else constraint_proj,
            source=self.source,
            var_names=self.var_names,
        )


def symmetrized_kernel(symbol: np.ndarray, constraint_proj: np.ndarray) -> np.ndarray:
    """``0.5 * (C[G,a,A] N[A,b,al] + C[G,b,A] N[A,a,al])`` with shape ``(G, a, b, al)``."""
    t = np.einsum("gaA,Abw->gabw", constraint_proj, symbol)
    return 0.5 * (t + t.transpose(0, 2, 1, 3))


@dataclass(frozen=True)
class Frame:
    """Time covector ``n_cov``, transversal vector ``t_vec`` and spatial covector basis."""

    n_cov: np.ndarray
    t_vec: np.ndarray
    k_basis: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.n_cov, dtype=float)
        t = np.asarray(self.t_vec, dtype=float)
        kb = np.atleast_2d(np.asarray(self.k_basis, dtype=float))
        if n.ndim != 1 or t.shape != n.shape or kb.shape != (n.size - 1, n.size):
            raise DimensionMismatch("frame needs n, t of length n_dim and n_dim-1 basis covectors")
        if abs(t @ n - 1) > 1e-12:
            raise ValueError(f"t.n must equal 1, got {t @ n}")
        if np.max(np.abs(kb @ t)) > 1e-12:
            raise ValueError("spatial basis covectors must annihilate t")
        if np.linalg.matrix_rank(np.vstack([n, kb])) < n.size:
            raise ValueError("n and the spatial basis must span the covector space")
        object.__setattr__(self, "n_cov", n)
        object.__setattr__(self, "t_vec", t)
        object.__setattr__(self, "k_basis", kb)

    @classmethod
    def standard(cls, n_dim: int) -> "Frame":
        e = np.eye(n_dim)
        return cls(e[0], e[0], e[1:])

    @property
    def n_dim(self) -> int:
        return self.n_cov.size

    def spatial(self, coeffs) -> np.ndarray:
        """Covector ``sum_i coeffs[i] * k_basis[i]``."""
        return np.asarray(coeffs, dtype=float) @ self.k_basis

    def to_dict(self) -> dict:
        return {"n_cov": self.n_cov.tolist(), "t_vec": self.t_vec.tolist(),
                "k_basis": self.k_basis.tolist()}


def fibonacci_sphere(count: int) -> np.ndarray:
    """``count`` nearly uniform points on the unit 2-sphere."""
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5 ** 0.5) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def sample_directions(frame: Frame, samples: int = 200, seed: int | None = None,
                      extra: int = 0) -> np.ndarray:
    """Unit spatial covectors: a deterministic spread, the basis axes, then seeded extras.

    For ``n_dim == 4`` the spread is a Fibonacci spiral, for ``n_dim == 3``
    equally spaced angles, for ``n_dim == 2`` the two points of the 0-sphere.
    Higher dimensions use Gaussian points from a fixed seed.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    dim = frame.n_dim - 1
    if dim == 3:
        pts = fibonacci_sphere(samples)
    elif dim == 2:
        ang = 2 * np.pi * (np.arange(samples) + 0.5) / samples
        pts = np.column_stack([np.cos(ang), np.sin(ang)])
    elif dim == 1:
        pts = np.array([[1.0], [-1.0]])
    else:
        pts = np.random.default_rng(12345).normal(size=(samples, dim))
    axes = np.eye(dim)
    blocks = [pts, axes]
    if extra:
        rnd = np.random.default_rng(seed).normal(size=(extra, dim))
        blocks.append(rnd)
    coeffs = np.vstack(blocks)
    coeffs /= np.linalg.norm(coeffs, axis=1, keepdims=True)
    return coeffs @ frame.k_basis


def symbol_at(sys: SystemDefinition, l) -> np.ndarray:
    """Principal symbol ``N^{Aa}_alpha l_a`` as a ``num_eqs x num_vars`` matrix."""
    l = np.asarray(l, dtype=float)
    if l.shape != (sys.n_dim,):
        raise DimensionMismatch(f"covector must have length {sys.n_dim}, got shape {l.shape}")
    return np.einsum("Aaw,a->Aw", sys.symbol, l)


def constraint_at(sys: SystemDefinition, l) -> np.ndarray:
    """``C^{Gamma a}_A l_a`` as a ``num_constraints x num_eqs`` matrix."""
    l = np.asarray(l, dtype=float)
    if l.shape != (sys.n_dim,):
        raise DimensionMismatch(f"covector must have length {sys.n_dim}")
    return np.einsum("gaA,a->gA", sys.constraint_proj, l)


def symbol_pencil(sys: SystemDefinition, frame: Frame, k) -> pc.MatrixPencil:
    """Pencil ``lam * N.n + N.k``."""
    return pc.MatrixPencil(symbol_at(sys, frame.n_cov), symbol_at(sys, k))


def _check_direction(frame: Frame, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape != (frame.n_dim,):
        raise DimensionMismatch(f"covector must have length {frame.n_dim}")
    perp = k - (frame.t_vec @ k) * frame.n_cov
    nk = np.linalg.norm(k)
    if nk == 0 or np.linalg.norm(perp) <= DEGENERACY_ANGLE * nk:
        raise DegenerateDirection("k is zero or numerically parallel to n")
    return k


# --------------------------------------------------------------------------- conditions

@dataclass
class Condition1Report:
    rank_of_An: int
    eigenvalue_table: list
    semisimple_real: bool
    failing_directions: list
    invariants: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.semisimple_real

    def to_dict(self) -> dict:
        return {
            "rank_of_An": self.rank_of_An,
            "semisimple_real": self.semisimple_real,
            "failing_directions": [list(map(float, k)) for k in self.failing_directions],
            "directions": [
                {"k": list(map(float, k)),
                 "eigenvalues": [_eig_row(*row) for row in table]}
                for k, table in self.eigenvalue_table
            ],
        }


def _eig_row(lam, alg, geom, is_real):
    value = float(np.real(lam)) if is_real else [float(np.real(lam)), float(np.imag(lam))]
    return {"eigenvalue": value, "algebraic": int(alg), "geometric": int(geom), "real": bool(is_real)}


def check_condition1(sys: SystemDefinition, frame: Frame, samples: int = 200,
                     tol: float = pc.DEFAULT_TOL, seed: int | None = 0,
                     directions: np.ndarray | None = None) -> Condition1Report:
    """Generalized Kreiss condition over sampled spatial directions.

    Requires ``rank(N.n) = |alpha|``; then, for every sampled unit ``k``,
    the finite spectrum of ``(N.n, N.k)`` must be real with size-1 blocks.
    """
    an = symbol_at(sys, frame.n_cov)
    rank_an = pc.numerical_rank(an, tol)
    if rank_an < sys.num_vars:
        raise RankDeficientTimeDirection(
            f"rank(N.n) = {rank_an} < |alpha| = {sys.num_vars}: not enough evolution equations")
    if directions is None:
        directions = sample_directions(frame, samples, seed)
    table = []
    failing = []
    invs = []
    for k in directions:
        inv, _ = pc.staircase_decompose(symbol_pencil(sys, frame, k), tol)
        rows = []
        ok = True
        for lam, alg, geom in inv.eigenvalue_table():
            is_real = bool(np.isreal(lam))
            rows.append((lam, alg, geom, is_real))
            ok &= is_real and alg == geom
        ok &= not inv.right_minimal_indices and not inv.infinite_blocks
        table.append((k, rows))
        invs.append(inv)
        if not ok:
            failing.append(k)
    return Condition1Report(rank_an, table, not failing, failing, invs)


@dataclass
class Condition2Report:
    passed: bool
    kernel_residual: float
    rank_Cn: int
    expected_rank: int
    message: str = ""

    def to_dict(self) -> dict:
        return {"passed": self.passed, "kernel_residual": self.kernel_residual,
                "rank_Cn": self.rank_Cn, "expected_rank": self.expected_rank,
                "message": self.message}


def verify_condition2(sys: SystemDefinition, frame: Frame, tol: float = KERNEL_TOL,
                      raise_on_fail: bool = True) -> Condition2Report:
    """Geroch constraint condition: kernel identity and ``rank(C.n) = |Gamma|``."""
    sk = symmetrized_kernel(sys.symbol, sys.constraint_proj)
    res = float(np.max(np.abs(sk), initial=0.0))
    cn = constraint_at(sys, frame.n_cov)
    rank_cn = pc.numerical_rank(cn, pc.DEFAULT_TOL) if cn.size else 0
    expected = sys.num_eqs - sys.num_vars
    msg = ""
    if res > tol:
        g, a, b, w = np.unravel_index(np.argmax(np.abs(sk)), sk.shape)
        msg = (f"symmetrized C^(a N^b) entry [Gamma={g}, a={a}, b={b}, alpha={w}] "
               f"= {sk[g, a, b, w]:.3e} exceeds {tol:.1e}")
    elif rank_cn != expected:
        msg = f"rank(C.n) = {rank_cn} != |A| - |alpha| = {expected}"
    report = Condition2Report(not msg, res, rank_cn, expected, msg)
    if msg and raise_on_fail:
        raise Condition2Violation(msg)
    return report


# --------------------------------------------------------------------------- structure

@dataclass(frozen=True)
class StructureCounts:
    d: int
    r: int
    s: int
    k: tuple

    def as_tuple(self) -> tuple[int, int, int]:
        return self.d, self.r, self.s


def constraint_symbol(sys: SystemDefinition, frame: Frame, k) -> np.ndarray:
    """``(C.n)(N.k)``, the ``|Gamma| x |alpha|`` matrix of the constraint principal part."""
    return constraint_at(sys, frame.n_cov) @ symbol_at(sys, k)


def structure_counts(sys: SystemDefinition, frame: Frame, k,
                     tol: float = pc.DEFAULT_TOL) -> StructureCounts:
    """``d = dim ker``, ``r = rank``, ``s = dim coker`` of ``(C.n)(N.k)``."""
    k = _check_direction(frame, k)
    mat = constraint_symbol(sys, frame, k)
    # scale from the pencil data so that an exactly vanishing product has rank 0
    scale = max(np.linalg.norm(symbol_at(sys, k), 2), np.linalg.norm(symbol_at(sys, frame.n_cov), 2))
    scale *= max(np.linalg.norm(constraint_at(sys, frame.n_cov), 2), 1e-300)
    r = pc.numerical_rank(mat, tol, scale, mat.shape) if mat.size else 0
    return StructureCounts(sys.num_vars - r, r, sys.num_constraints - r, tuple(map(float, k)))


def build_reduction(sys: SystemDefinition, frame: Frame, k, speeds: Sequence[float],
                    tol: float = pc.DEFAULT_TOL) -> np.ndarray:
    """Reduction ``h`` (``|alpha| x |A|``) with prescribed constraint-mode speeds.

    ``h = (N.n)^+ + K (C.n)``: the pseudo-inverse picks the evolution
    equations and ``K`` feeds back the constraint rows so that the reduced
    pencil ``h N (lam n + k)`` has roots ``{lam_1..lam_d} U {speeds}``.  The
    physical modes lie in ``ker (C.n)(N.k)`` and are untouched by ``K``.
    The result depends on ``k``.
    """
    k = _check_direction(frame, k)
    counts = structure_counts(sys, frame, k, tol)
    speeds = np.asarray(speeds, dtype=float).ravel()
    if speeds.size != counts.r:
        raise ValueError(f"need {counts.r} speeds, got {speeds.size}")
    an = symbol_at(sys, frame.n_cov)
    ak = symbol_at(sys, k)
    if pc.numerical_rank(an, tol) < sys.num_vars:
        raise RankDeficientTimeDirection("N.n is rank deficient")
    h0 = np.linalg.pinv(an)
    cn = constraint_at(sys, frame.n_cov)
    cout = cn @ ak
    x = h0 @ ak
    _, _, vh = np.linalg.svd(cout)
    r = counts.r
    v2 = vh[:r].T                    # complement of the physical kernel
    w = cout @ v2                    # |Gamma| x r, full column rank
    x22 = v2.T @ x @ v2
    gain = v2 @ (-np.diag(speeds) - x22) @ np.linalg.pinv(w)
    return h0 + gain @ cn


def reduced_symbol(sys: SystemDefinition, h: np.ndarray, l) -> np.ndarray:
    return h @ symbol_at(sys, l)


# --------------------------------------------------------------------------- analysis

@dataclass
class DirectionAnalysis:
    k: np.ndarray
    counts: StructureCounts
    invariants: pc.KroneckerInvariants
    eigenvalues: list
    anomalies: list


def analyze_direction(sys: SystemDefinition, frame: Frame, k,
                      tol: float = pc.DEFAULT_TOL) -> DirectionAnalysis:
    """Kronecker invariants plus (d, r, s) at one direction, with deviations classified."""
    counts = structure_counts(sys, frame, k, tol)
    inv, _ = pc.staircase_decompose(symbol_pencil(sys, frame, k), tol)
    anomalies = []
    if inv.right_minimal_indices:
        anomalies.append("gauge freedom: right minimal indices present")
    if inv.infinite_blocks:
        anomalies.append("infinite eigenvalues: N.n is rank deficient")
    if any(not np.isreal(e) for e, _ in inv.finite_blocks):
        anomalies.append("non-real eigenvalues")
    if any(k_ > 1 for _, k_ in inv.finite_blocks):
        anomalies.append("Jordan blocks of size > 1")
    if any(h > 1 for h in inv.left_minimal_indices):
        anomalies.append("left minimal indices > 1")
    if inv.has_condition_form() and inv.structure_counts() != counts.as_tuple():
        anomalies.append("(d, r, s) from the constraint matrix disagrees with the Kronecker form")
    return DirectionAnalysis(np.asarray(k), counts, inv, inv.eigenvalue_table(), anomalies)
