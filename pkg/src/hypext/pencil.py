"""Kronecker structure of real matrix pencils ``P(lam) = lam * A + B``.

The invariants (finite and infinite elementary divisors, left and right
minimal indices) are computed with a two-sided orthogonal staircase
reduction.  The right singular structure and the infinite eigenvalues are
deflated first, then the left singular structure of the transposed
remainder; the regular square part that is left over is brought to
generalized real Schur form and its Jordan structure is read off from a
nilpotent staircase at every eigenvalue cluster.

Rank decisions all use one threshold: a singular value counts as zero iff
``sigma <= tol * max(m, n) * sigma_ref``, where ``sigma_ref`` is the
spectral norm of the full pencil data (not of the sub-block under test).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, IllConditionedRankDecision, InvariantMismatch

__all__ = [
    "DEFAULT_TOL",
    "MatrixPencil",
    "KroneckerInvariants",
    "StaircaseTransform",
    "VerificationReport",
    "evaluate",
    "staircase_decompose",
    "verify_invariants",
    "finite_eigenvalues",
    "numerical_rank",
    "rank_threshold",
    "cluster_values",
]

DEFAULT_TOL = 1e-10
#: eigenvalues closer than this (relative to ``1 + |lam|``) are merged
MERGE_RADIUS = 1e-7
# coarse radius used only to detect split defective eigenvalues
_COARSE_RADIUS = 1e-4


@dataclass(frozen=True)
class MatrixPencil:
    """The pencil ``lam * a_mat + b_mat`` of two real ``m x n`` matrices."""

    a_mat: np.ndarray
    b_mat: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_mat, dtype=float, ndmin=2)
        b = np.array(self.b_mat, dtype=float, ndmin=2)
        if a.ndim != 2 or a.shape != b.shape:
            raise DimensionMismatch(
                f"pencil coefficients must be equal-shape matrices, got {a.shape} and {b.shape}"
            )
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise DimensionMismatch("pencil must have at least one row and one column")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("pencil entries must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b_mat", b)

    @property
    def rows(self) -> int:
        return self.a_mat.shape[0]

    @property
    def cols(self) -> int:
        return self.a_mat.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.a_mat.shape

    def scale(self) -> float:
        """Reference magnitude used by the rank threshold."""
        return max(np.linalg.norm(self.a_mat, 2), np.linalg.norm(self.b_mat, 2))

    def transformed(self, left: np.ndarray, right: np.ndarray) -> "MatrixPencil":
        """Return ``left.T @ P @ right``."""
        return MatrixPencil(left.T @ self.a_mat @ right, left.T @ self.b_mat @ right)

    def transpose(self) -> "MatrixPencil":
        return MatrixPencil(self.a_mat.T, self.b_mat.T)


def evaluate(p: MatrixPencil, lam) -> np.ndarray:
    """Return ``lam * A + B``.  Complex ``lam`` gives a complex matrix."""
    if not np.isfinite(lam):
        raise ValueError("lambda must be finite")
    return lam * p.a_mat + p.b_mat


def rank_threshold(scale: float, shape: Sequence[int], tol: float = DEFAULT_TOL) -> float:
    return tol * max(shape) * scale


def numerical_rank(mat: np.ndarray, tol: float = DEFAULT_TOL, scale: float | None = None,
                   shape: Sequence[int] | None = None) -> int:
    """Rank of ``mat`` under the package threshold convention.

    ``scale`` defaults to the largest singular value of ``mat`` and ``shape``
    to ``mat.shape``.
    """
    mat = np.atleast_2d(mat)
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if scale is None:
        scale = s[0]
    thr = rank_threshold(scale, shape if shape is not None else mat.shape, tol)
    return int(np.sum(s > thr))


class _RankDecider:
    """Counts singular values above a fixed threshold and remembers close calls."""

    def __init__(self, threshold: float):
        self.threshold = threshold
        self.close_calls: list[float] = []

    def rank(self, s: np.ndarray) -> int:
        thr = self.threshold
        if thr > 0:
            near = s[(s > thr / 10) & (s < thr * 10)]
            self.close_calls.extend((near / thr).tolist())
        return int(np.sum(s > thr))


@dataclass(frozen=True)
class KroneckerInvariants:
    """Complete strict-equivalence invariants of a pencil.

    ``finite_blocks`` holds ``(eigenvalue, size)`` pairs, one per Jordan
    block; ``infinite_blocks`` the sizes of the blocks at infinity;
    ``right_minimal_indices`` the epsilon_i of the ``L_eps`` column blocks and
    ``left_minimal_indices`` the eta_j of the ``L_eta^T`` row blocks.
    """

    finite_blocks: tuple = ()
    infinite_blocks: tuple = ()
    right_minimal_indices: tuple = ()
    left_minimal_indices: tuple = ()

    def __post_init__(self):
        fb = tuple(sorted(((_as_scalar(e), int(k)) for e, k in self.finite_blocks),
                          key=lambda t: _order_key(t[0]) + (t[1],)))
        object.__setattr__(self, "finite_blocks", fb)
        for name in ("infinite_blocks", "right_minimal_indices", "left_minimal_indices"):
            object.__setattr__(self, name, tuple(sorted(int(v) for v in getattr(self, name))))

    # dimension bookkeeping -------------------------------------------------
    @property
    def n_cols(self) -> int:
        return (sum(k for _, k in self.finite_blocks) + sum(self.infinite_blocks)
                + sum(e + 1 for e in self.right_minimal_indices) + sum(self.left_minimal_indices))

    @property
    def n_rows(self) -> int:
        return (sum(k for _, k in self.finite_blocks) + sum(self.infinite_blocks)
                + sum(self.right_minimal_indices) + sum(h + 1 for h in self.left_minimal_indices))

    @property
    def normal_rank(self) -> int:
        return (sum(k for _, k in self.finite_blocks) + sum(self.infinite_blocks)
                + sum(self.right_minimal_indices) + sum(self.left_minimal_indices))

    @property
    def rank_of_lambda_coefficient(self) -> int:
        return (sum(k for _, k in self.finite_blocks) + sum(k - 1 for k in self.infinite_blocks)
                + sum(self.right_minimal_indices) + sum(self.left_minimal_indices))

    def eigenvalue_table(self) -> list[tuple]:
        """``[(eigenvalue, algebraic multiplicity, geometric multiplicity), ...]``."""
        table: list[list] = []
        for e, k in self.finite_blocks:
            if table and table[-1][0] == e:
                table[-1][1] += k
                table[-1][2] += 1
            else:
                table.append([e, k, 1])
        return [tuple(row) for row in table]

    def has_condition_form(self) -> bool:
        """True when the pencil has the shape guaranteed by the hyperbolicity conditions.

        That is: size-1 real finite blocks, no infinite blocks, no right
        minimal indices and left minimal indices only 0 or 1.
        """
        return (all(k == 1 and np.isreal(e) for e, k in self.finite_blocks)
                and not self.infinite_blocks and not self.right_minimal_indices
                and all(h in (0, 1) for h in self.left_minimal_indices))

    def structure_counts(self) -> tuple[int, int, int]:
        """``(d, r, s)``: finite blocks, ``L_1^T`` blocks and zero rows."""
        d = len(self.finite_blocks)
        r = sum(1 for h in self.left_minimal_indices if h == 1)
        s = sum(1 for h in self.left_minimal_indices if h == 0)
        return d, r, s

    def to_dict(self) -> dict:
        def enc(e):
            return [float(np.real(e)), float(np.imag(e))] if np.iscomplexobj(e) else float(e)
        return {
            "finite_blocks": [{"eigenvalue": enc(e), "size": k} for e, k in self.finite_blocks],
            "infinite_blocks": list(self.infinite_blocks),
            "right_minimal_indices": list(self.right_minimal_indices),
            "left_minimal_indices": list(self.left_minimal_indices),
        }


def _order_key(e):
    # rounded so that eigenvalues equal to within roundoff order consistently
    return (round(float(np.real(e)), 7) + 0.0, round(float(np.imag(e)), 7) + 0.0)


def _as_scalar(e):
    e = complex(e)
    return e.real if e.imag == 0 else e


@dataclass
class StaircaseTransform:
    """Orthogonal ``left_q``, ``right_z`` with ``left_q.T @ P @ right_z`` in staircase form.

    ``steps`` records the deflation pattern: ``(phase, row0, col0, nullity,
    rank)`` where phase is ``"right"`` (kernel of the lambda coefficient) or
    ``"left"`` (the same on the transposed remainder).  ``regular`` is the
    ``(row0, col0, size)`` of the regular block.
    """

    left_q: np.ndarray
    right_z: np.ndarray
    tol_used: float
    threshold: float
    steps: list = field(default_factory=list)
    regular: tuple = (0, 0, 0)
    ill_conditioned: bool = False

    def pattern_residual(self, p: MatrixPencil) -> float:
        """Largest entry in a position the staircase pattern says is zero."""
        t = p.transformed(self.left_q, self.right_z)
        a, b = t.a_mat, t.b_mat
        worst = 0.0
        for phase, r0, c0, nul, rk in self.steps:
            aa, bb = (a, b) if phase == "right" else (a.T, b.T)
            blocks = [aa[r0:, c0:c0 + nul], bb[r0 + rk:, c0:c0 + nul]]
            for blk in blocks:
                if blk.size:
                    worst = max(worst, float(np.max(np.abs(blk))))
        r0, c0, size = self.regular
        if size:
            # generalized real Schur form: lambda coefficient upper triangular
            worst = max(worst, float(np.max(np.abs(np.tril(a[r0:, c0:], -1)), initial=0.0)))
        return worst


def _deflate(e, f, lq, rz, r0, c0, decider, steps=None, phase="right"):
    """Zero-structure staircase on the trailing window, w.r.t. the kernel of ``e``.

    Works in place on ``e``, ``f`` (possibly transposed views) while
    accumulating row transforms into ``lq`` and column transforms into
    ``rz``.  Returns the ``(nullity, rank)`` sequence and the final window
    origin.
    """
    seq = []
    while True:
        ew = e[r0:, c0:]
        ncols = ew.shape[1]
        if ncols == 0:
            break
        if ew.shape[0] == 0:
            nullity = ncols
            vp = np.eye(ncols, dtype=e.dtype)
        else:
            _, s, vh = np.linalg.svd(ew, full_matrices=True)
            rank = decider.rank(s)
            nullity = ncols - rank
            v = vh.conj().T
            vp = np.hstack([v[:, rank:], v[:, :rank]])
        if nullity == 0:
            break
        e[:, c0:] = e[:, c0:] @ vp
        f[:, c0:] = f[:, c0:] @ vp
        rz[:, c0:] = rz[:, c0:] @ vp
        e[r0:, c0:c0 + nullity] = 0.0
        blk = f[r0:, c0:c0 + nullity]
        if blk.shape[0] == 0:
            rank_b = 0
        else:
            u1, s1, w1h = np.linalg.svd(blk, full_matrices=True)
            rank_b = decider.rank(s1)
            u1h = u1.conj().T
            e[r0:, :] = u1h @ e[r0:, :]
            f[r0:, :] = u1h @ f[r0:, :]
            lq[:, r0:] = lq[:, r0:] @ u1
            w1 = w1h.conj().T
            e[:, c0:c0 + nullity] = e[:, c0:c0 + nullity] @ w1
            f[:, c0:c0 + nullity] = f[:, c0:c0 + nullity] @ w1
            rz[:, c0:c0 + nullity] = rz[:, c0:c0 + nullity] @ w1
            e[r0:, c0:c0 + nullity] = 0.0
            f[r0 + rank_b:, c0:c0 + nullity] = 0.0
        if steps is not None:
            steps.append((phase, r0, c0, nullity, rank_b))
        seq.append((nullity, rank_b))
        r0 += rank_b
        c0 += nullity
    return seq, r0, c0


def _counts_from_sequence(seq):
    """Translate a staircase sequence into (minimal index counts, Jordan block sizes)."""
    minimal = []
    jordan = []
    for i, (nul, rk) in enumerate(seq):
        minimal.extend([i] * (nul - rk))
        nxt = seq[i + 1][0] if i + 1 < len(seq) else 0
        jordan.extend([i + 1] * (rk - nxt))
    return minimal, jordan


def cluster_values(values, radius: float = MERGE_RADIUS) -> list[list[int]]:
    """Single-linkage clusters of complex values; ``|x - y| <= radius * (1 + max|x|, |y|)``.

    Returns index groups ordered by the (real, imag) order of their members.
    """
    values = np.asarray(values, dtype=complex)
    order = sorted(range(values.size), key=lambda i: (values[i].real, values[i].imag))
    parent = list(range(values.size))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for ii, i in enumerate(order):
        for j in order[ii + 1:]:
            if abs(values[i] - values[j]) <= radius * (1 + max(abs(values[i]), abs(values[j]))):
                parent[find(j)] = find(i)
    groups: dict[int, list[int]] = {}
    for i in order:
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _jordan_sizes(e_reg, f_reg, mu, threshold):
    """Jordan block sizes of the regular pencil at eigenvalue ``mu``."""
    dtype = complex if np.iscomplexobj(mu) or isinstance(mu, complex) else float
    amu = (mu * e_reg + f_reg).astype(dtype)
    b = e_reg.astype(dtype).copy()
    p = amu.shape[0]
    decider = _RankDecider(threshold)
    seq, _, _ = _deflate(amu, b, np.eye(p, dtype=dtype), np.eye(p, dtype=dtype), 0, 0, decider)
    _, sizes = _counts_from_sequence(seq)
    return sizes, decider


def _snap(mu):
    mu = complex(mu)
    if abs(mu.imag) <= MERGE_RADIUS * (1 + abs(mu)):
        return mu.real
    return mu


def _finite_structure(e_reg, f_reg, tol, scale_e, scale_f, shape):
    """Eigenvalues and Jordan blocks of a regular pencil with invertible ``e_reg``."""
    if e_reg.shape[0] == 0:
        return [], False, []
    eigs = sla.eigvals(-f_reg, e_reg)
    finite = np.isfinite(eigs)
    n_inf = int(np.sum(~finite))
    eigs = eigs[finite]
    blocks = []
    flagged = bool(n_inf)
    close = []

    def thr_at(mu):
        return rank_threshold(abs(mu) * scale_e + scale_f, shape, tol)

    for coarse in cluster_values(eigs, _COARSE_RADIUS):
        fine = cluster_values(eigs[coarse], MERGE_RADIUS)
        candidates = [coarse] if len(fine) > 1 else []
        done = False
        for grp in candidates:
            mu = _snap(np.mean(eigs[grp]))
            sizes, dec = _jordan_sizes(e_reg, f_reg, mu, thr_at(mu))
            if sum(sizes) == len(grp):
                blocks.extend((mu, k) for k in sizes)
                close.extend(dec.close_calls)
                done = True
        if done:
            continue
        for sub in fine:
            grp = [coarse[i] for i in sub]
            mu = _snap(np.mean(eigs[grp]))
            sizes, dec = _jordan_sizes(e_reg, f_reg, mu, thr_at(mu))
            close.extend(dec.close_calls)
            if sum(sizes) != len(grp):
                flagged = True
                if not sizes:
                    sizes = [len(grp)]
                else:
                    sizes = sorted(sizes)
                    sizes[-1] += len(grp) - sum(sizes)
                    sizes = [k for k in sizes if k > 0] or [len(grp)]
            blocks.extend((mu, k) for k in sizes)
    return blocks, flagged or bool(close), [1] * n_inf


def staircase_decompose(p: MatrixPencil, tol: float = DEFAULT_TOL):
    """Kronecker invariants of ``p`` and the orthogonal staircase bases.

    Returns ``(KroneckerInvariants, StaircaseTransform)``.  When a rank
    decision lands within a factor 10 of the threshold the result is still
    returned, with ``transform.ill_conditioned`` set and an
    :class:`IllConditionedRankDecision` warning issued.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    m, n = p.shape
    scale = p.scale()
    threshold = rank_threshold(scale, (m, n), tol)
    decider = _RankDecider(threshold)

    e = p.a_mat.copy()
    f = p.b_mat.copy()
    lq = np.eye(m)
    rz = np.eye(n)
    steps: list = []

    seq1, r0, c0 = _deflate(e, f, lq, rz, 0, 0, decider, steps, "right")
    right_idx, inf_sizes = _counts_from_sequence(seq1)

    seq2, cc, rr = _deflate(e.T, f.T, rz, lq, c0, r0, decider, steps, "left")
    left_idx, inf2 = _counts_from_sequence(seq2)
    r0, c0 = rr, cc
    inf_sizes = inf_sizes + inf2

    e_reg = e[r0:, c0:]
    f_reg = f[r0:, c0:]
    flagged = False
    if e_reg.shape[0] != e_reg.shape[1]:
        # only reachable through inconsistent rank decisions
        flagged = True
        size = min(e_reg.shape)
        e_reg = e_reg[:size, :size]
        f_reg = f_reg[:size, :size]
    size = e_reg.shape[0]
    if size:
        ff, ee, qq, zz = sla.qz(f_reg, e_reg, output="real")
        e[r0:, :] = qq.T @ e[r0:, :]
        f[r0:, :] = qq.T @ f[r0:, :]
        lq[:, r0:] = lq[:, r0:] @ qq
        e[:, c0:] = e[:, c0:] @ zz
        f[:, c0:] = f[:, c0:] @ zz
        rz[:, c0:] = rz[:, c0:] @ zz
        e_reg = e[r0:r0 + size, c0:c0 + size]
        f_reg = f[r0:r0 + size, c0:c0 + size]

    blocks, flag_fin, inf3 = _finite_structure(
        e_reg, f_reg, tol, np.linalg.norm(p.a_mat, 2), np.linalg.norm(p.b_mat, 2), (m, n))
    inf_sizes = inf_sizes + inf3
    flagged = flagged or flag_fin or bool(decider.close_calls)

    inv = KroneckerInvariants(
        finite_blocks=blocks,
        infinite_blocks=inf_sizes,
        right_minimal_indices=right_idx,
        left_minimal_indices=left_idx,
    )
    transform = StaircaseTransform(
        left_q=lq, right_z=rz, tol_used=tol, threshold=threshold, steps=steps,
        regular=(r0, c0, size), ill_conditioned=flagged,
    )
    if flagged:
        warnings.warn(IllConditionedRankDecision(
            "a rank decision is within a factor 10 of the threshold; invariants are tolerance-sensitive"
        ), stacklevel=2)
    return inv, transform


@dataclass
class VerificationReport:
    passed: bool
    max_discrepancy: int
    checks: list


def verify_invariants(p: MatrixPencil, inv: KroneckerInvariants, tol: float = DEFAULT_TOL,
                      seed: int = 0) -> VerificationReport:
    """Cross-check claimed invariants against ranks recomputed from ``p``.

    Checks the two dimension identities, ``rank(A)``, the rank at every
    claimed finite eigenvalue and the normal rank at 5 random points.
    Raises :class:`InvariantMismatch` naming the first failing check.
    """
    m, n = p.shape
    checks = []
    checks.append(("column count", n, inv.n_cols))
    checks.append(("row count", m, inv.n_rows))
    na = np.linalg.norm(p.a_mat, 2)
    nb = np.linalg.norm(p.b_mat, 2)
    scale = max(na, nb)
    checks.append(("rank(A)", inv.rank_of_lambda_coefficient,
                   numerical_rank(p.a_mat, tol, scale, (m, n))))
    nrank = inv.normal_rank
    for eig, _, geom in inv.eigenvalue_table():
        r = numerical_rank(evaluate(p, eig), tol, abs(eig) * na + nb, (m, n))
        checks.append((f"rank at eigenvalue {eig}", nrank - geom, r))
    rng = np.random.default_rng(seed)
    radius = 1.0 + max((abs(e) for e, _ in inv.finite_blocks), default=0.0)
    for _ in range(5):
        mu = float(rng.normal() * radius)
        r = numerical_rank(evaluate(p, mu), tol, abs(mu) * na + nb, (m, n))
        checks.append((f"normal rank at {mu:.6g}", nrank, r))
    worst = 0
    for name, expected, actual in checks:
        worst = max(worst, abs(expected - actual))
    for name, expected, actual in checks:
        if expected != actual:
            raise InvariantMismatch(f"{name}: predicted {expected}, computed {actual}")
    return VerificationReport(passed=True, max_discrepancy=worst, checks=checks)


def finite_eigenvalues(p: MatrixPencil, tol: float = DEFAULT_TOL) -> list[tuple]:
    """``[(eigenvalue, algebraic, geometric multiplicity)]`` of the finite spectrum."""
    inv, _ = staircase_decompose(p, tol)
    return inv.eigenvalue_table()
