"""As-rigid-as-possible surface deformation.

The deformation energy over directed edges (each undirected edge
counted once per endpoint) is

    E(p', R) = sum_i sum_{j in N(i)} w_ij || (p'_i - p'_j) - R_i (p_i - p_j) ||^2

with per-vertex rotations R_i and cotangent weights w_ij.  The solver
alternates two exact minimizations:

* local step: best-fit rotation per vertex from the weighted covariance
  of rest against current edge vectors (closed form via SVD);
* global step: the sparse linear system L p' = b with
  b_i = sum_j (w_ij / 2) (R_i + R_j) (p_i - p_j), prefactorized once.

Each round minimizes the energy exactly in one block of variables, so
the per-iteration energy trace never increases.

Constraints come in two flavors.  Hard handles are eliminated from the
system; soft handles add ``weight * sum || p'_c - t_c ||^2`` to the
objective, which lands on the system diagonal as ``weight / 2``.  Both
kinds can coexist (the refinement pass uses soft targets everywhere
plus hard pins).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from .errors import (
    DuplicateHandle,
    IndexOutOfRange,
    InvalidParams,
    NoHandles,
    SingularSystem,
    SizeMismatch,
)
from .mesh import cotangent_weights

# fill-reducing ordering; COLAMD stays fast on large mesh Laplacians
# where SuperLU's minimum-degree variants degrade badly
_ORDERING = "COLAMD"


def fit_rotation(rest_edges, deformed_edges, weights=None):
    """Best rotation carrying weighted rest edges onto deformed edges.

    Minimizes ``sum_k w_k || d_k - R e_k ||^2`` over rotations.  Always
    returns a proper rotation (determinant +1), also for rank-deficient
    or empty edge sets, where the remaining axes are chosen by the SVD.

    Parameters
    ----------
    rest_edges, deformed_edges : (k, 3) arrays
    weights : (k,) array, optional
        Defaults to uniform.
    """
    e = np.atleast_2d(np.asarray(rest_edges, dtype=np.float64))
    d = np.atleast_2d(np.asarray(deformed_edges, dtype=np.float64))
    if e.shape != d.shape or (e.size and e.shape[1] != 3):
        raise SizeMismatch(
            f"edge arrays must share shape (k, 3), got {e.shape} "
            f"and {d.shape}")
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != e.shape[0]:
            raise SizeMismatch(f"{w.shape[0]} weights for {e.shape[0]} edges")
        e = e * w[:, None]
    s = e.T @ d
    u, _, vt = np.linalg.svd(s)
    r = vt.T @ u.T
    if np.linalg.det(r) < 0.0:
        vt[2] *= -1.0
        r = vt.T @ u.T
    return r


def _fit_rotations_batch(s):
    """Proper rotations for a stack of covariance matrices ``(n, 3, 3)``."""
    u, _, vt = np.linalg.svd(s)
    v = vt.transpose(0, 2, 1)
    ut = u.transpose(0, 2, 1)
    r = v @ ut
    neg = np.linalg.det(r) < 0.0
    if np.any(neg):
        vflip = v[neg]
        vflip[:, :, 2] *= -1.0
        r[neg] = vflip @ ut[neg]
    return r


def fit_rigid(src_points, dst_points):
    """Best rigid motion (R, t) with ``dst ~= R @ src + t`` (least squares)."""
    src = np.asarray(src_points, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst_points, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise SizeMismatch("point sets must match in shape")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    r = fit_rotation(src - cs, dst - cd)
    return r, cd - r @ cs


@dataclass
class Constraints:
    """Handle set for a deformation solve.

    Attributes
    ----------
    ids : (k,) int array of vertex indices
    targets : (k, 3) float array of target positions
    mode : "hard" or "soft"
    soft_weight : float or None
        Penalty weight for soft mode; ``None`` picks 10x the largest
        Laplacian diagonal entry at solve time.
    """

    ids: np.ndarray
    targets: np.ndarray
    mode: str = "hard"
    soft_weight: float | None = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        self.targets = np.asarray(
            self.targets, dtype=np.float64).reshape(-1, 3)
        if self.mode not in ("hard", "soft"):
            raise InvalidParams(f"mode must be 'hard' or 'soft', "
                                f"got {self.mode!r}")
        if self.targets.shape[0] != self.ids.shape[0]:
            raise SizeMismatch(
                f"{self.ids.shape[0]} handle ids but "
                f"{self.targets.shape[0]} targets")
        if len(np.unique(self.ids)) != len(self.ids):
            raise DuplicateHandle("a vertex is constrained twice")
        if not np.all(np.isfinite(self.targets)):
            raise InvalidParams("constraint targets must be finite")
        if self.mode == "soft" and self.soft_weight is not None \
                and not self.soft_weight > 0.0:
            raise InvalidParams("soft_weight must be positive")

    def validate_for(self, mesh):
        if len(self.ids) == 0:
            raise NoHandles("deformation needs at least one handle")
        if self.ids.min() < 0 or self.ids.max() >= mesh.n_vertices:
            raise IndexOutOfRange(
                f"handle ids must lie in [0, {mesh.n_vertices})")


@dataclass
class ArapSystem:
    """Prefactorized deformation system, reusable across solves.

    The factorization depends only on the mesh, the edge weights, the
    hard handle id set, and the soft id/weight pair, so one system can
    serve many target configurations.

    Negative edge weights (obtuse triangulations) are clamped to zero
    up front: an indefinite per-vertex edge covariance would make the
    local step return a spurious rotation even at rest, silently
    breaking the identity fixed point.  ``clamped`` reports whether any
    weight was zeroed.
    """

    mesh: object
    weights: np.ndarray = None
    hard_ids: np.ndarray = None
    soft_ids: np.ndarray = None
    soft_weight: float = 0.0
    clamped: bool = field(default=False, init=False)
    rotations_: np.ndarray = field(default=None, init=False)

    def __post_init__(self):
        mesh = self.mesh
        if self.weights is None:
            self.weights = cotangent_weights(mesh)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (mesh.n_edges,):
            raise SizeMismatch(
                f"need one weight per edge ({mesh.n_edges}), got "
                f"{self.weights.shape}")
        self.hard_ids = (np.zeros(0, dtype=np.int64) if self.hard_ids is None
                         else np.asarray(self.hard_ids, dtype=np.int64))
        self.soft_ids = (np.zeros(0, dtype=np.int64) if self.soft_ids is None
                         else np.asarray(self.soft_ids, dtype=np.int64))
        if len(self.soft_ids) and not self.soft_weight > 0.0:
            raise InvalidParams("soft ids need a positive soft_weight")
        if np.any(self.weights < 0.0):
            self.weights = np.maximum(self.weights, 0.0)
            self.clamped = True
        self._assemble(self.weights)
        try:
            self._factorize()
        except RuntimeError:
            raise SingularSystem(
                "deformation system is singular; the mesh may be "
                "under-constrained or badly degenerate") from None

    # -- assembly ----------------------------------------------------------

    def _assemble(self, weights):
        mesh = self.mesh
        n = mesh.n_vertices
        e = mesh.edges
        self.d_src = np.concatenate([e[:, 0], e[:, 1]]).astype(np.int64)
        self.d_dst = np.concatenate([e[:, 1], e[:, 0]]).astype(np.int64)
        order = np.argsort(self.d_src, kind="stable")
        self.d_src = self.d_src[order]
        self.d_dst = self.d_dst[order]
        self.d_w = np.tile(weights, 2)[order]
        deg = np.bincount(self.d_src, minlength=n)
        self.row_starts = np.zeros(n, dtype=np.int64)
        np.cumsum(deg[:-1], out=self.row_starts[1:])
        p = mesh.positions
        self.rest_e = p[self.d_src] - p[self.d_dst]
        self.w_rest = self.d_w[:, None] * self.rest_e
        # c_i = sum_j (w/2) e_ij, the R_i part of the right-hand side
        self.rhs_const = np.add.reduceat(0.5 * self.w_rest,
                                         self.row_starts, axis=0)
        diag = np.add.reduceat(self.d_w, self.row_starts)
        lap = csr_matrix(
            (np.concatenate([-self.d_w, diag]),
             (np.concatenate([self.d_src, np.arange(n)]),
              np.concatenate([self.d_dst, np.arange(n)]))),
            shape=(n, n))
        self.laplacian = lap
        self.max_diag = float(np.abs(diag).max())

    def _factorize(self):
        n = self.mesh.n_vertices
        free = np.ones(n, dtype=bool)
        free[self.hard_ids] = False
        self.free = np.flatnonzero(free)
        self.free_index = np.full(n, -1, dtype=np.int64)
        self.free_index[self.free] = np.arange(len(self.free))
        lap = self.laplacian
        m = lap[self.free][:, self.free].tocsc(copy=True)
        if len(self.soft_ids):
            sdiag = np.zeros(n)
            sdiag[self.soft_ids] = 0.5 * self.soft_weight
            sdiag = sdiag[self.free]
            m.setdiag(m.diagonal() + sdiag)
        self.lap_fc = lap[self.free][:, self.hard_ids].tocsr()
        if len(self.free) == 0:
            self.lu = None
            return
        self.lu = splu(m, permc_spec=_ORDERING)
        probe = self.lu.solve(np.ones(len(self.free)))
        if not np.all(np.isfinite(probe)):
            raise SingularSystem("factorization produced non-finite values")

    # -- solver steps ------------------------------------------------------

    def fit_rotations(self, positions):
        """Local step: best-fit rotation per vertex (batched)."""
        d = positions[self.d_src] - positions[self.d_dst]
        outer = self.w_rest[:, :, None] * d[:, None, :]
        s = np.add.reduceat(outer.reshape(-1, 9), self.row_starts, axis=0)
        return _fit_rotations_batch(s.reshape(-1, 3, 3))

    def global_step(self, rotations, hard_targets=None, soft_targets=None):
        """Global step: minimize the quadratic in positions for fixed R."""
        # b_i = R_i c_i + sum_j (w/2) R_j e_ij
        b = np.einsum("nab,nb->na", rotations, self.rhs_const)
        per_edge = np.einsum(
            "eab,eb->ea", rotations[self.d_dst], 0.5 * self.w_rest)
        b += np.add.reduceat(per_edge, self.row_starts, axis=0)
        if len(self.soft_ids):
            b[self.soft_ids] += 0.5 * self.soft_weight * soft_targets
        n = self.mesh.n_vertices
        out = np.empty((n, 3))
        if len(self.hard_ids):
            out[self.hard_ids] = hard_targets
        if len(self.free):
            rhs = b[self.free]
            if len(self.hard_ids):
                rhs = rhs - self.lap_fc @ hard_targets
            out[self.free] = self.lu.solve(rhs)
        return out

    def energy(self, positions, rotations):
        """Deformation energy (directed-edge convention, both directions)."""
        d = positions[self.d_src] - positions[self.d_dst]
        pred = np.einsum("eab,eb->ea", rotations[self.d_src], self.rest_e)
        diff = d - pred
        return float(np.einsum("e,ea,ea->", self.d_w, diff, diff))

    def objective(self, positions, rotations, soft_targets=None):
        """Energy plus the soft penalty ``w * sum || p_c - t_c ||^2``."""
        e = self.energy(positions, rotations)
        if len(self.soft_ids):
            r = positions[self.soft_ids] - soft_targets
            e += self.soft_weight * float(np.einsum("ka,ka->", r, r))
        return e


def arap_energy(mesh, positions, rotations, weights=None):
    """Deformation energy of given positions and rotations.

    Standalone evaluation over directed edges; matches the quantity the
    solver's trace reports (before any soft penalty).  The default
    weights are clamped cotangents, as in :class:`ArapSystem`.
    """
    p = np.asarray(positions, dtype=np.float64)
    r = np.asarray(rotations, dtype=np.float64)
    if p.shape != (mesh.n_vertices, 3):
        raise SizeMismatch(f"positions must be ({mesh.n_vertices}, 3)")
    if r.shape != (mesh.n_vertices, 3, 3):
        raise SizeMismatch(f"rotations must be ({mesh.n_vertices}, 3, 3)")
    w = np.maximum(cotangent_weights(mesh), 0.0) if weights is None else \
        np.asarray(weights, dtype=np.float64)
    if w.shape != (mesh.n_edges,):
        raise SizeMismatch(f"need one weight per edge ({mesh.n_edges})")
    total = 0.0
    rest = mesh.positions
    for a, bcol in ((0, 1), (1, 0)):
        i = mesh.edges[:, a]
        j = mesh.edges[:, bcol]
        d = p[i] - p[j]
        pred = np.einsum("eab,eb->ea", r[i], rest[i] - rest[j])
        diff = d - pred
        total += float(np.einsum("e,ea,ea->", w, diff, diff))
    return total


def default_soft_weight(mesh, weights=None):
    """10x the largest Laplacian diagonal entry, the soft-mode default."""
    w = np.maximum(cotangent_weights(mesh), 0.0) if weights is None else \
        np.asarray(weights)
    n = mesh.n_vertices
    diag = np.zeros(n)
    np.add.at(diag, mesh.edges[:, 0], w)
    np.add.at(diag, mesh.edges[:, 1], w)
    return 10.0 * float(np.abs(diag).max())


def arap_solve(mesh, constraints, iterations=20, weights=None, init=None,
               system=None):
    """Deform a mesh as-rigidly-as-possible under handle constraints.

    Runs ``iterations`` local-global rounds from a rigid-motion initial
    guess (the best rigid fit of the handle rest positions onto their
    targets, which keeps the solve exactly equivariant under rigid
    motion of the constraints).

    Parameters
    ----------
    mesh : Mesh
        Rest state.
    constraints : Constraints
    iterations : int >= 0
    weights : (e,) array, optional
        Edge weights; cotangent weights by default.
    init : (n, 3) array, optional
        Starting positions, overriding the rigid-fit guess.
    system : ArapSystem, optional
        Reuse an existing factorization; must match the constraint
        id set, mode, and weights.

    Returns
    -------
    (positions, trace)
        Final positions ``(n, 3)`` and the objective value after each
        of the ``iterations`` rounds (deformation energy plus soft
        penalty when applicable).  The trace is non-increasing up to
        rounding because both alternating steps are exact minimizers.
    """
    if iterations < 0:
        raise InvalidParams("iterations must be >= 0")
    constraints.validate_for(mesh)
    ids = constraints.ids
    targets = constraints.targets
    if constraints.mode == "hard":
        hard_ids, soft_ids, soft_weight = ids, None, 0.0
    else:
        hard_ids, soft_ids = None, ids
        soft_weight = constraints.soft_weight
        if soft_weight is None:
            soft_weight = default_soft_weight(mesh, weights)
    if system is None:
        system = ArapSystem(mesh, weights=weights, hard_ids=hard_ids,
                            soft_ids=soft_ids, soft_weight=soft_weight)
    if init is None:
        r0, t0 = fit_rigid(mesh.positions[ids], targets)
        positions = mesh.positions @ r0.T + t0
    else:
        positions = np.array(init, dtype=np.float64)
        if positions.shape != (mesh.n_vertices, 3):
            raise SizeMismatch(f"init must be ({mesh.n_vertices}, 3)")
    hard_targets = soft_targets = None
    if constraints.mode == "hard":
        positions[ids] = targets
        hard_targets = targets
    else:
        soft_targets = targets
    trace = np.empty(iterations)
    rotations = None
    for k in range(iterations):
        rotations = system.fit_rotations(positions)
        positions = system.global_step(rotations, hard_targets, soft_targets)
        trace[k] = system.objective(positions, rotations, soft_targets)
    system.rotations_ = rotations
    return positions, trace
