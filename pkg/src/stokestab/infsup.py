"""Numeric stability ground truth: local nullspaces, witness pressures,
global spurious modes and the discrete inf-sup constant.

The local oracle assembles, for one macro-element, the divergence pairing
between pressures and velocities that vanish on the macro boundary, and
counts the singular values of that matrix restricted to the complement of
constant pressures.  A macro is numerically regular exactly when that count
is zero, which is what the closed-form predicates are validated against.

The global constant is beta_h = sqrt(lambda_min) of the pressure Schur
complement pencil  B A^-1 B^T q = lambda Mp q  with the constant pressure
deflated; A^-1 is applied through a cached sparse factorization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import FECombo, build_dofmap, P1, P1B, P2, Q1, Q2
from .macroelement import predict_regularity
from .mesh import Mesh, TRIANGLE, TETRAHEDRON, QUADRILATERAL
from .stokes import assemble, operator_matrix, StokesError


@dataclass
class LocalNullspace:
    dim: int                       # nullspace dimension modulo constants
    basis: np.ndarray              # (dim, n_p) rows, Mp-orthogonal to 1
    singular_values: np.ndarray    # spectrum of the deflated pairing
    matrix: sp.spmatrix            # pressure rows x interior velocity columns
    pressure_vertices: np.ndarray  # global vertex ids for the P1/Q1 dofs


@dataclass
class InfSupResult:
    beta: float
    spectrum: np.ndarray
    deflated: int = 1
    converged: bool = True
    n_pressure: int = 0


def star_submesh(macro):
    """Standalone mesh of the macro star; vertex 0 is the center, then the
    ring in stored order."""
    mesh = macro.mesh
    order = macro.vertex_ids()
    remap = {int(v): k for k, v in enumerate(order)}
    verts = mesh.vertices[order]
    cells = [[remap[int(v)] for v in mesh.cells[ci]] for ci in macro.cells]
    return Mesh(mesh.dim, mesh.cell_kind, verts, cells)


_LOCAL_QDEG = {TRIANGLE: 5, TETRAHEDRON: 6, QUADRILATERAL: 5}


def _local_divergence(macro, combo):
    """Pressure x interior-velocity pairing matrix on the star."""
    sub = star_submesh(macro)
    if combo.dim != sub.dim:
        raise ValueError(f"combo {combo} does not match a {sub.dim}D macro")
    qdeg = _LOCAL_QDEG[sub.cell_kind]
    p_dm = build_dofmap(sub, combo.pressure)
    blocks = []
    for k, tag in enumerate(combo.velocity):
        dm = build_dofmap(sub, tag)
        Bk = operator_matrix(sub, p_dm, dm, "deriv", qdeg, deriv_axis=k)
        interior = ~dm.boundary_mask
        assert interior.any(), "macro-element with no interior velocity dofs"
        blocks.append(Bk[:, interior])
    Mp = operator_matrix(sub, p_dm, p_dm, "mass", qdeg)
    return sp.hstack(blocks, format="csr"), Mp, sub


def local_nullspace(macro, combo, floor=1e-10):
    """Pressures orthogonal to every interior divergence, modulo constants.

    Returns the full singular spectrum of the pairing restricted to the
    Mp-orthogonal complement of the constant pressure; dim counts the
    singular values at or below floor times the largest one.
    """
    if isinstance(combo, str):
        combo = FECombo.parse(combo)
    B, Mp, sub = _local_divergence(macro, combo)
    n_p = B.shape[0]
    mp1 = np.asarray(Mp @ np.ones(n_p))
    q, _ = np.linalg.qr(np.column_stack([mp1, np.eye(n_p)[:, :-1]]))
    V = q[:, 1:]
    T = (B.T @ V)
    T = T.toarray() if sp.issparse(T) else np.asarray(T)
    U, s, Vt = np.linalg.svd(T, full_matrices=False)
    smax = s.max(initial=0.0)
    null = s <= floor * smax
    dim = int(null.sum())
    basis = (V @ Vt[null].T).T
    # normalize in the Mp inner product
    out = []
    for b in basis:
        nrm = math.sqrt(float(b @ (Mp @ b)))
        out.append(b / nrm if nrm > 0 else b)
    return LocalNullspace(dim, np.array(out).reshape(dim, n_p), s, B,
                          macro.vertex_ids())


def nullspace_residual(ns, p):
    """Relative residual of a pressure vector against the local pairing."""
    Bt = ns.matrix.T
    num = np.linalg.norm(Bt @ p)
    den = ns.singular_values.max(initial=0.0) * np.linalg.norm(p)
    return num / den if den > 0 else np.inf


# ----------------------------------------------------------------------
# analytic witness pressures
# ----------------------------------------------------------------------

def _split_profile(macro, direction):
    """Piecewise-linear pressure used by the split-macro counterexamples:
    -(d)/|M+| on the positive side of the splitting hyperplane and +(d)/|M-|
    on the other, where d is the signed offset from q0 along the given
    direction (an axis index or a vector)."""
    if np.isscalar(direction):
        vec = np.zeros(macro.dim)
        vec[int(direction)] = 1.0
    else:
        vec = np.asarray(direction, float)
        vec = vec / np.linalg.norm(vec)
    sub_vertices = macro.mesh.vertices[macro.vertex_ids()]
    q0 = macro.q0
    off = (sub_vertices - q0) @ vec
    tol = 1e-12 * macro.diameter()
    meas = macro.mesh.cell_measures()[macro.cells]
    centroid_off = (macro.mesh.vertices[macro.mesh.cells[macro.cells]]
                    .mean(axis=1) - q0) @ vec
    a_plus = float(meas[centroid_off > 0].sum())
    a_minus = float(meas[centroid_off < 0].sum())
    return np.where(off > tol, -off / a_plus,
                    np.where(off < -tol, off / a_minus, 0.0))


def _p2_s_zero_pressure(macro, axis):
    """Nullspace pressure for an even unaligned ring with vanishing
    alternating sum: solves the slope system and evaluates the piecewise
    linear pressure at the ring nodes."""
    n = macro.n_v
    ring = macro.ring_coords() - macro.q0
    if axis == "x":
        ring = ring[:, ::-1]   # swap roles so off-axis coordinate is second
    areas = macro.areas
    ahat = np.array([1.0 / areas[k] + 1.0 / areas[k - 1] for k in range(n)])
    cot = ring[:, 0] / ring[:, 1]
    # continuity at ring vertex k across spoke k, between the cells before
    # and after it:  (c_k - c_{k-1}) + (-1)^k cot_k (1/a_{k-1} + 1/a_k) beta = 0
    A = np.zeros((n + 1, n + 1))
    for k in range(n):
        A[k, k] = 1.0
        A[k, (k - 1) % n] = -1.0
        A[k, n] = ((-1.0) ** k) * cot[k] * ahat[k]
    A[n, :n] = areas
    _, s, Vt = np.linalg.svd(A)
    sol = Vt[-1]
    c, beta = sol[:n], sol[n]
    b = np.array([((-1.0) ** j) * beta / areas[j] for j in range(n)])
    vals = np.empty(n + 1)
    vals[0] = 0.0
    for k in range(n):
        right = b[k] * ring[k, 0] + c[k] * ring[k, 1]
        left = b[(k - 1) % n] * ring[k, 0] + c[(k - 1) % n] * ring[k, 1]
        assert abs(right - left) <= 1e-8 * (abs(right) + abs(left) + 1e-30)
        vals[1 + k] = right
    return vals


def analytic_singular_pressure(macro, combo, tol=1e-10, alignment_tol=1e-9):
    """Closed-form nullspace pressure for a singular macro, or None.

    Covers the split-macro profile (bubble combinations, the two-aligned
    quadratic case, the rectangle macro) and the even-ring vanishing-sum
    case; returns coefficients in the order center vertex, then ring.
    """
    if isinstance(combo, str):
        combo = FECombo.parse(combo)
    vel = tuple(combo.velocity)
    if macro.dim == 2 and macro.mesh.cell_kind == QUADRILATERAL:
        if vel != (Q2, Q1) or combo.pressure != Q1:
            raise ValueError(f"unsupported quad combo {combo}")
        return _q_macro_pressure(macro)
    if macro.dim == 2:
        verdict = predict_regularity(macro, combo, tol=tol,
                                     alignment_tol=alignment_tol)
        if verdict.regular:
            return None
        enriched_first = vel[0] in (P1B, P2)
        if verdict.reason == "two-aligned":
            return _split_profile(macro, 1 if enriched_first else 0)
        return _p2_s_zero_pressure(macro, "y" if enriched_first else "x")
    if macro.dim == 3:
        from .macroelement import predict_regularity_3d, _semi_planes
        verdict = predict_regularity_3d(macro, combo,
                                        alignment_tol=alignment_tol)
        if verdict.regular:
            return None
        n_bub = sum(1 for t in vel if t == P1B)
        if n_bub == 2:
            return _split_profile(macro, vel.index(P1))
        # one enriched component: a closed form exists when the splitting
        # semi-planes form one full plane through the axis line
        axis = vel.index(P1B)
        count, aligned, dirs = _semi_planes(macro, axis, alignment_tol)
        if count == 2 and aligned:
            b_ax, c_ax = [a for a in range(3) if a != axis]
            normal = np.zeros(3)
            normal[b_ax] = -np.sin(dirs[0])
            normal[c_ax] = np.cos(dirs[0])
            return _split_profile(macro, normal)
        return None
    raise ValueError(f"unsupported macro dimension {macro.dim}")


def _q_macro_pressure(macro):
    """Absolute-offset pressure on the 2x2 rectangle macro, weighted by the
    areas above and below the aligned row."""
    return _split_profile(macro, 1)


# ----------------------------------------------------------------------
# global counterexample on layered structured meshes
# ----------------------------------------------------------------------

def _uniform_levels(coords, rtol=1e-9):
    vals = np.sort(np.unique(coords))
    span = max(vals[-1] - vals[0], 1e-300)
    levels = [vals[0]]
    for v in vals[1:]:
        if v - levels[-1] > rtol * span:
            levels.append(v)
    levels = np.asarray(levels)
    if len(levels) < 2:
        return None
    gaps = np.diff(levels)
    if np.abs(gaps - gaps.mean()).max() > rtol * span:
        return None
    return levels


def global_counterexample(mesh, combo):
    """Alternating-slope pressure annihilated by every discrete divergence.

    On a uniformly layered structured triangulation the continuous piecewise
    pressure with slope +-1 across alternating layers (zero mean by layer
    symmetry) is orthogonal to the divergence of every velocity with the
    enriched component across the layering; the layers run horizontally for
    an enriched first component and vertically for an enriched second one.
    """
    if isinstance(combo, str):
        combo = FECombo.parse(combo)
    axis = 1 if combo.velocity[0] in (P1B, P2) else 0
    coords = mesh.vertices[:, axis]
    levels = _uniform_levels(coords)
    if levels is None:
        raise StokesError("mesh is not layered-structured along the "
                          "required axis")
    dy = float(np.diff(levels).mean())
    idx = np.rint((coords - levels[0]) / dy).astype(int)
    span = levels[-1] - levels[0]
    if np.abs(coords - (levels[0] + idx * dy)).max() > 1e-9 * span:
        raise StokesError("mesh vertices do not sit on uniform layers")
    return np.where(idx % 2 == 0, dy / 2.0, -dy / 2.0)


# ----------------------------------------------------------------------
# global inf-sup constant
# ----------------------------------------------------------------------

def _schur_dense(A, B, batch=256):
    lu = spla.splu(A.tocsc())
    n_p = B.shape[0]
    Bt = B.T.tocsc()
    S = np.empty((n_p, n_p))
    for lo in range(0, n_p, batch):
        hi = min(lo + batch, n_p)
        Z = lu.solve(Bt[:, lo:hi].toarray())
        S[:, lo:hi] = B @ Z
    return 0.5 * (S + S.T)


def infsup_constant(mesh, combo, k=5, dense_limit=1200):
    """Discrete inf-sup constant with homogeneous Dirichlet velocity.

    Forms the pressure Schur complement densely through batched solves with
    the factorized stiffness, shifts the constant-pressure mode out of the
    way, and extracts the smallest k eigenvalues (dense solver for small
    pressure spaces, shift-invert Lanczos above dense_limit).
    """
    if isinstance(combo, str):
        combo = FECombo.parse(combo)
    sys = assemble(mesh, combo)
    free = sys.free_mask()
    A = sys.A[free][:, free]
    B = sys.B[:, free].tocsr()
    Mp = sys.Mp.tocsr()
    n_p = Mp.shape[0]
    k = min(k, n_p - 2)
    S = _schur_dense(A, B)

    ones = np.ones(n_p)
    mp1 = np.asarray(Mp @ ones)
    m11 = float(ones @ mp1)
    lam_est = float(np.max(S.diagonal() / Mp.diagonal()))
    mu = 1e4 * max(lam_est, 1e-300)
    Sd = S + mu / m11 * np.outer(mp1, mp1)

    converged = True
    if n_p <= dense_limit:
        vals = sla.eigh(Sd, Mp.toarray(), subset_by_index=[0, k - 1],
                        eigvals_only=True)
    else:
        delta = 1e-8 * lam_est
        C = Sd + delta * Mp.toarray()
        lu_piv = sla.lu_factor(C)
        op = spla.LinearOperator((n_p, n_p),
                                 matvec=lambda x: sla.lu_solve(lu_piv, x))
        try:
            vals = spla.eigsh(Sd, k=k, M=Mp, sigma=-delta, OPinv=op,
                              which="LM", return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            vals = np.sort(exc.eigenvalues)
            converged = False
            warnings.warn(f"eigensolver returned {len(vals)} of {k} "
                          "eigenvalues")
        vals = np.sort(vals)

    # the dense/Lanczos eigenvalue noise floor sits around 1e-13 * scale;
    # anything below 1e-12 * scale is indistinguishable from an exact
    # spurious mode and is reported as beta = 0
    floor = 1e-12 * max(lam_est, 1e-300)
    lam_min = float(vals[0]) if len(vals) else np.nan
    beta = 0.0 if lam_min <= floor else math.sqrt(lam_min)
    return InfSupResult(beta=beta, spectrum=np.asarray(vals),
                        deflated=1, converged=converged, n_pressure=n_p)
