"""Hyperbolic extensions: square symbols ``[N | G C]`` and their certification.

Two ways of choosing ``G^{AB}`` are supported.  ``covariant_metrics``
pairs one Lorentzian metric with each constraint and is a genuine
differential extension.  ``canonical_kronecker`` builds
``G = diag(I_d, -D^2, I_r, I_s)`` in a Kronecker basis of the symbol at the
direction being examined; it is rebuilt per direction and therefore
pseudodifferential.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import pencil as pc
from .errors import BlockMismatch, SignatureError, SingularTimeSymbol
from .models import LorentzMetric
from .symbol import (
    Frame,
    SystemDefinition,
    constraint_at,
    sample_directions,
    structure_counts,
    symbol_at,
)

MODES = ("covariant_metrics", "canonical_kronecker")
DEFAULT_KAPPA_BOUND = 1e3
IMAG_TOL = 1e-7

VERDICT_ORDER = ("not_hyperbolic", "weakly_hyperbolic", "degenerate", "strongly_hyperbolic")


@dataclass(frozen=True)
class ExtensionSpec:
    """How to choose ``G^{AB}``; ``damping`` is the lower-order ``-sigma Z`` coefficient."""

    mode: str = "covariant_metrics"
    metrics: tuple = ()
    speeds: tuple = ()
    damping: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        mets = []
        for m in self.metrics:
            arr = np.asarray(m.inverse_components if isinstance(m, LorentzMetric) else m, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise BlockMismatch("each metric block must be a square matrix")
            if np.max(np.abs(arr - arr.T)) > 1e-12:
                raise SignatureError("metric block is not symmetric")
            try:
                mets.append(LorentzMetric(0.5 * (arr + arr.T)))
            except SignatureError as exc:
                raise SignatureError(f"metric block is not Lorentzian: {exc}") from None
        object.__setattr__(self, "metrics", tuple(mets))
        object.__setattr__(self, "speeds", tuple(float(s) for s in self.speeds))
        if self.mode == "covariant_metrics" and not mets:
            raise BlockMismatch("covariant mode needs one metric per constraint")

    @classmethod
    def cleaning_speeds(cls, speeds: Sequence[float], n_dim: int = 4,
                        damping: float = 0.0) -> "ExtensionSpec":
        """Covariant spec with metrics ``diag(-1, c^2, ...)`` for each cleaning speed ``c``."""
        return cls("covariant_metrics",
                   tuple(LorentzMetric.minkowski(n_dim, c) for c in speeds), (), damping)

    def to_dict(self) -> dict:
        return {"mode": self.mode,
                "metrics": [m.inverse_components.ravel().tolist() for m in self.metrics],
                "speeds": list(self.speeds), "damping": self.damping}


def equation_blocks(sys: SystemDefinition) -> list[np.ndarray]:
    """Equation indices carrying each constraint, one vector-index block per constraint."""
    blocks = []
    seen: set[int] = set()
    for g in range(sys.num_constraints):
        support = np.flatnonzero(np.any(sys.constraint_proj[g] != 0, axis=0))
        if support.size != sys.n_dim or seen.intersection(support.tolist()):
            raise BlockMismatch(
                f"constraint {g} does not act on a separate block of {sys.n_dim} equations")
        seen.update(support.tolist())
        blocks.append(support)
    return blocks


def covariant_g(sys: SystemDefinition, metrics: Sequence[LorentzMetric]) -> np.ndarray:
    if len(metrics) != sys.num_constraints:
        raise BlockMismatch(f"{len(metrics)} metric blocks for {sys.num_constraints} constraints")
    g = np.zeros((sys.num_eqs, sys.num_eqs))
    for blk, met in zip(equation_blocks(sys), metrics):
        if met.n_dim != sys.n_dim:
            raise BlockMismatch("metric dimension does not match the system")
        g[np.ix_(blk, blk)] = met.inverse_components
    return g


def canonical_g(sys: SystemDefinition, frame: Frame, k, speeds: Sequence[float],
                tol: float = pc.DEFAULT_TOL) -> np.ndarray:
    """``G^{AB}`` equal to ``diag(I_d, -D^2, I_r, I_s)`` in a Kronecker basis at ``k``.

    The equation basis is ``[N.n q_i | N.n v_j, N.k v_j | e_l]`` with
    ``q_i`` the physical eigenvectors, ``v_j`` a complement of them and
    ``e_l`` lifts of the left kernel of ``(C.n)(N.k)``.
    """
    an = symbol_at(sys, frame.n_cov)
    ak = symbol_at(sys, k)
    cn = constraint_at(sys, frame.n_cov)
    counts = structure_counts(sys, frame, k, tol)
    d, r, s = counts.as_tuple()
    speeds = np.asarray(speeds, dtype=float).ravel()
    if speeds.size != r:
        raise BlockMismatch(f"canonical mode needs {r} speeds at this direction, got {speeds.size}")
    cout = cn @ ak
    u, sv, vh = np.linalg.svd(cout)
    phys = vh[r:].T                      # ker (C.n)(N.k): the physical eigenvectors
    comp = vh[:r].T
    inv, _ = pc.staircase_decompose(pc.MatrixPencil(an, ak), tol)
    qs = []
    for lam, alg, geom in inv.eigenvalue_table():
        _, s_, vh_ = np.linalg.svd(np.real(lam) * an + ak)
        qs.append(vh_[-geom:].T)
    q_phys = np.hstack(qs) if qs else phys[:, :0]
    if q_phys.shape[1] != d:
        q_phys = phys
    lifts = np.linalg.pinv(cn) @ u[:, r:]
    winv = np.hstack([an @ q_phys, an @ comp, ak @ comp, lifts])
    gcan = np.diag(np.concatenate([np.ones(d), -speeds ** 2, np.ones(r), np.ones(s)]))
    return winv @ gcan @ winv.T


@dataclass
class ExtendedSymbol:
    """Square extended symbol; ``ext_tensor[A, a, D]`` with ``D`` over ``(phi, Z)``."""

    base: SystemDefinition
    ext_tensor: np.ndarray
    spec: ExtensionSpec
    g_matrix: np.ndarray
    direction_dependent: bool = False
    reference_k: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.ext_tensor.shape[0]

    @property
    def var_names(self) -> tuple:
        return tuple(self.base.var_names) + tuple(f"Z{i + 1}" for i in range(self.base.num_constraints))

    def tensor_at(self, frame: Frame, k) -> np.ndarray:
        if not self.direction_dependent:
            return self.ext_tensor
        k = np.asarray(k, dtype=float)
        g = canonical_g(self.base, frame, k / np.linalg.norm(k), self.spec.speeds)
        return _assemble(self.base, g)

    def matrix_at(self, l, frame: Frame | None = None, k=None) -> np.ndarray:
        tensor = self.ext_tensor if frame is None else self.tensor_at(frame, k)
        return np.einsum("AaD,a->AD", tensor, np.asarray(l, dtype=float))

    def pencil(self, frame: Frame, k) -> tuple[np.ndarray, np.ndarray]:
        """``(M.n, M.k)``."""
        tensor = self.tensor_at(frame, k)
        return (np.einsum("AaD,a->AD", tensor, frame.n_cov),
                np.einsum("AaD,a->AD", tensor, np.asarray(k, dtype=float)))


def _assemble(sys: SystemDefinition, g: np.ndarray) -> np.ndarray:
    zcols = np.einsum("AB,gaB->Aag", g, sys.constraint_proj)
    return np.concatenate([sys.symbol, zcols], axis=2)


def build_extended_symbol(sys: SystemDefinition, spec: ExtensionSpec, frame: Frame | None = None,
                          reference_k=None) -> ExtendedSymbol:
    """Assemble ``M = [N | G C]`` for the chosen ``G``."""
    if spec.mode == "covariant_metrics":
        g = covariant_g(sys, spec.metrics)
        return ExtendedSymbol(sys, _assemble(sys, g), spec, g)
    frame = frame or Frame.standard(sys.n_dim)
    if reference_k is None:
        reference_k = frame.k_basis[0]
    reference_k = np.asarray(reference_k, dtype=float)
    g = canonical_g(sys, frame, reference_k / np.linalg.norm(reference_k), spec.speeds)
    return ExtendedSymbol(sys, _assemble(sys, g), spec, g, direction_dependent=True,
                          reference_k=reference_k)


# --------------------------------------------------------------------------- eigen analysis

@dataclass
class DirectionRecord:
    k: np.ndarray
    eigenvalues: list            # (lam, algebraic, geometric)
    kappa: float
    verdict: str
    eigenvector_count: int
    physical: list = field(default_factory=list)
    collision: bool = False
    eigenvectors: np.ndarray | None = None

    def spectrum(self) -> np.ndarray:
        return np.array(sorted(np.real(lam) for lam, alg, _ in self.eigenvalues for _ in range(alg)))

    def extension_spectrum(self) -> np.ndarray:
        """Extended spectrum with the physical multiset removed."""
        out = []
        phys = [(p, a) for p, a, _ in self.physical]
        for lam, alg, _ in self.eigenvalues:
            taken = sum(a for p, a in phys
                        if abs(p - lam) <= pc.MERGE_RADIUS * (1 + abs(lam)))
            out.extend([np.real(lam)] * max(alg - taken, 0))
        return np.array(sorted(out))

    def to_dict(self) -> dict:
        return {
            "k": [float(x) for x in self.k],
            "eigenvalues": [_enc(lam, alg, geom) for lam, alg, geom in self.eigenvalues],
            "speeds": [float(x) for x in self.spectrum()],
            "kappa": _num(self.kappa),
            "eigenvector_count": self.eigenvector_count,
            "verdict": self.verdict,
            "touching_cones": self.collision,
        }


def _num(x):
    return float(x) if np.isfinite(x) else None


def _enc(lam, alg, geom):
    val = float(np.real(lam)) if np.isreal(lam) else [float(np.real(lam)), float(np.imag(lam))]
    return {"eigenvalue": val, "algebraic": int(alg), "geometric": int(geom)}


def _balanced(mn, mk):
    rows = np.linalg.norm(np.hstack([mn, mk]), axis=1)
    cols = np.linalg.norm(np.vstack([mn, mk]), axis=0)
    rows[rows == 0] = 1.0
    cols[cols == 0] = 1.0
    dr = 1.0 / rows[:, None]
    dc = 1.0 / cols[None, :]
    return mn * dr * dc, mk * dr * dc, dc.ravel()


def analyze_direction(ext: ExtendedSymbol, frame: Frame, k, kappa_bound: float = DEFAULT_KAPPA_BOUND,
                      tol: float = pc.DEFAULT_TOL, keep_vectors: bool = False) -> DirectionRecord:
    """Eigenstructure of the extended pencil ``(M.n, M.k)`` at one direction."""
    k = np.asarray(k, dtype=float)
    mn0, mk0 = ext.pencil(frame, k)
    size = mn0.shape[0]
    if pc.numerical_rank(mn0, tol) < size:
        raise SingularTimeSymbol("M.n is singular: the extension cannot be evolved in this frame")
    mn, mk, colscale = _balanced(mn0, mk0)
    eigs = sla.eigvals(-mk, mn)
    sn, sk = np.linalg.norm(mn, 2), np.linalg.norm(mk, 2)
    eig_rows = []
    bases = []
    real = True
    for grp in pc.cluster_values(eigs, pc.MERGE_RADIUS):
        mu = complex(np.mean(eigs[grp]))
        is_real = abs(mu.imag) <= IMAG_TOL * (1 + abs(mu))
        mu = mu.real if is_real else mu
        real &= is_real
        mat = mu * mn + mk
        _, s, vh = np.linalg.svd(mat)
        thr = pc.rank_threshold(abs(mu) * sn + sk, mat.shape, tol)
        # eigenvalues within a cluster may be split by roundoff: shift-invariant count
        nullity = int(np.sum(s <= max(thr, 0.0)))
        geom = max(1, min(len(grp), nullity)) if nullity else 0
        if geom == 0:
            # cluster centre slightly off a defective eigenvalue; count one vector
            geom = 1
        eig_rows.append((mu, len(grp), geom))
        bases.append(vh[-geom:].conj().T)
    count = sum(g for _, _, g in eig_rows)
    if count == size:
        t = np.hstack(bases)
        t = t / np.linalg.norm(t, axis=0)
        kappa = float(np.linalg.cond(t))
    else:
        t = None
        kappa = np.inf

    base_inv, _ = pc.staircase_decompose(
        pc.MatrixPencil(symbol_at(ext.base, frame.n_cov), symbol_at(ext.base, k)), tol)
    physical = base_inv.eigenvalue_table()
    collision = False
    for mu, alg, _ in eig_rows:
        p_mult = sum(a for p, a, _ in physical if abs(p - mu) <= pc.MERGE_RADIUS * (1 + abs(mu)))
        if 0 < p_mult < alg:
            collision = True

    if not real:
        verdict = "not_hyperbolic"
    elif count < size or not kappa <= kappa_bound:
        verdict = "weakly_hyperbolic"
    elif collision:
        verdict = "degenerate"
    else:
        verdict = "strongly_hyperbolic"
    vecs = None
    if keep_vectors and t is not None:
        vecs = t * colscale[:, None]
    return DirectionRecord(k, eig_rows, kappa, verdict, count, physical, collision, vecs)


@dataclass
class HyperbolicityReport:
    verdict: str
    records: list
    kappa_max: float
    worst_k: np.ndarray
    kappa_bound: float
    direction_dependent: bool = False
    note: str = "algebraic Kreiss condition on sampled directions"

    @property
    def touching_directions(self) -> list:
        return [r.k for r in self.records if r.collision]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "kappa_max": _num(self.kappa_max),
            "kappa_bound": self.kappa_bound,
            "worst_k": [float(x) for x in self.worst_k],
            "direction_dependent": self.direction_dependent,
            "note": self.note,
            "num_directions": len(self.records),
            "touching_directions": [[float(x) for x in k] for k in self.touching_directions],
            "directions": [r.to_dict() for r in self.records],
        }


def check_strong_hyperbolicity(ext: ExtendedSymbol, frame: Frame, samples: int = 200,
                               kappa_bound: float = DEFAULT_KAPPA_BOUND,
                               tol: float = pc.DEFAULT_TOL, seed: int | None = 0,
                               directions=None) -> HyperbolicityReport:
    """Sweep sampled directions; the verdict is the worst per-direction verdict.

    Per direction: complex eigenvalues give ``not_hyperbolic``; a missing
    eigenvector or ``kappa > kappa_bound`` gives ``weakly_hyperbolic``; an
    extension mode coinciding with a physical mode (touching cones) gives
    ``degenerate``.  Only otherwise is it ``strongly_hyperbolic``.
    """
    if ext.size != ext.ext_tensor.shape[2]:
        raise BlockMismatch("extended symbol is not square")
    if directions is None:
        directions = sample_directions(frame, samples, seed)
    records = [analyze_direction(ext, frame, k, kappa_bound, tol) for k in directions]
    worst_rank = min(VERDICT_ORDER.index(r.verdict) for r in records)
    kappas = np.array([r.kappa for r in records])
    i_worst = int(np.argmax(kappas))
    failing = [i for i, r in enumerate(records) if VERDICT_ORDER.index(r.verdict) == worst_rank]
    if worst_rank < VERDICT_ORDER.index("strongly_hyperbolic"):
        i_worst = failing[0]
    return HyperbolicityReport(VERDICT_ORDER[worst_rank], records, float(np.max(kappas)),
                               np.asarray(records[i_worst].k), kappa_bound, ext.direction_dependent)


def characteristic_speeds(ext: ExtendedSymbol, frame: Frame, k) -> list:
    """Eigenvalues of ``(M.n, M.k)`` in ascending order."""
    mn, mk = ext.pencil(frame, k)
    if pc.numerical_rank(mn) < mn.shape[0]:
        raise SingularTimeSymbol("M.n is singular")
    mn, mk, _ = _balanced(mn, mk)
    eigs = sla.eigvals(-mk, mn)
    if np.all(np.abs(eigs.imag) <= IMAG_TOL * (1 + np.abs(eigs))):
        return sorted(float(x) for x in eigs.real)
    return sorted(eigs.tolist(), key=lambda z: (z.real, z.imag))


@dataclass
class ConeReport:
    passed: bool
    margin: float
    timelike: list
    touching: list

    def to_dict(self) -> dict:
        return {"passed": self.passed, "margin": self.margin, "n_timelike": self.timelike,
                "touching": [{"k": [float(x) for x in k], "metric": i} for k, i in self.touching]}


def check_cone_compatibility(metrics: Sequence[LorentzMetric], frame: Frame, samples: int = 200,
                             rel_tol: float = 1e-8, seed: int | None = 0,
                             directions=None) -> ConeReport:
    """``n`` timelike for every metric, and no extension cone touching the base cone.

    ``metrics[0]`` is the base metric.  Extension metrics may coincide with
    each other; only their roots against the base roots are compared.
    """
    n = frame.n_cov
    timelike = [bool(m.contract(n, n) < 0) for m in metrics]
    if directions is None:
        directions = sample_directions(frame, samples, seed)
    margin = np.inf
    touching = []
    base = metrics[0]
    if not all(timelike):
        # without a common timelike n the root comparison is meaningless
        return ConeReport(False, float("nan"), timelike, touching)
    for k in directions:
        r0 = base.null_roots(n, k)
        for i, met in enumerate(metrics[1:], start=1):
            ri = met.null_roots(n, k)
            for a in r0:
                for b in ri:
                    sep = abs(a - b)
                    margin = min(margin, sep)
                    if sep <= rel_tol * (1 + max(abs(a), abs(b))):
                        touching.append((np.asarray(k), i))
    return ConeReport(all(timelike) and not touching, float(margin), timelike, touching)
