"""Penalized Stokes systems with per-component velocity spaces.

The saddle problem uses one scalar space per velocity component (so the
stiffness block is block-diagonal over components) and a continuous pressure.
The divergence constraint carries a small pressure penalization eps*(p, pbar)
which fixes the pressure constant; the assembled system

    [ A   -B^T ] [w]   [f]
    [ -B  -eps*Mp ] [p] = [g]

is symmetric indefinite and solved by a direct sparse factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import FECombo, DofMap, build_dofmap, eval_basis, quadrature, P2
from .mesh import Mesh, TRIANGLE, TETRAHEDRON, TOP, write_csv


class StokesError(Exception):
    pass


# ----------------------------------------------------------------------
# vectorized cell operators
# ----------------------------------------------------------------------

def cell_geometry(mesh):
    """Affine map data per cell: Jacobian, transposed inverse, measure."""
    v = mesh.vertices
    c = mesh.cells
    if mesh.cell_kind in (TRIANGLE, TETRAHEDRON):
        d = mesh.dim
        J = np.stack([v[c[:, k + 1]] - v[c[:, 0]] for k in range(d)], axis=2)
        detJ = np.linalg.det(J)
        invJT = np.linalg.inv(J).transpose(0, 2, 1)
        ref_vol = 0.5 if d == 2 else 1.0 / 6.0
        return J, invJT, np.abs(detJ) * ref_vol
    # axis-aligned rectangles with reference square [0, 1]^2
    e1 = v[c[:, 1]] - v[c[:, 0]]
    e3 = v[c[:, 3]] - v[c[:, 0]]
    if np.abs(e1[:, 1]).max() > 1e-12 or np.abs(e3[:, 0]).max() > 1e-12:
        raise StokesError("only axis-aligned rectangular quads are supported")
    m = len(c)
    J = np.zeros((m, 2, 2))
    J[:, 0, 0] = e1[:, 0]
    J[:, 1, 1] = e3[:, 1]
    invJT = np.zeros_like(J)
    invJT[:, 0, 0] = 1.0 / e1[:, 0]
    invJT[:, 1, 1] = 1.0 / e3[:, 1]
    return J, invJT, e1[:, 0] * e3[:, 1]


def _scatter(rows_dofs, cols_dofs, elmats, shape):
    m, nr, nc = elmats.shape
    rows = np.repeat(rows_dofs, nc, axis=1).ravel()
    cols = np.tile(cols_dofs, (1, nr)).ravel()
    mat = sp.coo_matrix((elmats.ravel(), (rows, cols)), shape=shape)
    return mat.tocsr()


def operator_matrix(mesh, row_dm, col_dm, kind, qdeg, deriv_axis=None):
    """Assemble mass / stiffness / divergence-column blocks.

    kind 'mass': (phi_row, phi_col); 'stiffness': (grad phi_row, grad phi_col)
    on the same space; 'deriv': (phi_row, d_axis phi_col), the pressure-row /
    velocity-column divergence block.
    """
    rule = quadrature(mesh.cell_kind, qdeg)
    _, invJT, meas = cell_geometry(mesh)
    rv, rg = eval_basis(row_dm.space, mesh.cell_kind, rule.points)
    cv, cg = eval_basis(col_dm.space, mesh.cell_kind, rule.points)
    w = rule.weights

    if kind == "mass":
        elm = np.einsum("q,qi,qj->ij", w, rv, cv)
        elmats = meas[:, None, None] * elm[None, :, :]
    elif kind == "stiffness":
        gphys = np.einsum("ckd,qid->cqik", invJT, cg)
        elmats = np.einsum("q,cqik,cqjk->cij", w, gphys, gphys)
        elmats *= meas[:, None, None]
    elif kind == "deriv":
        gphys = np.einsum("ckd,qid->cqik", invJT, cg)
        elmats = np.einsum("q,qi,cqj->cij", w, rv, gphys[:, :, :, deriv_axis])
        elmats *= meas[:, None, None]
    else:
        raise ValueError(kind)
    return _scatter(row_dm.cell_dofs, col_dm.cell_dofs, elmats,
                    (row_dm.n_dofs, col_dm.n_dofs))


def load_vector(mesh, dm, fn, qdeg=7):
    """Assemble (f, phi_i) for a scalar callable fn(points)."""
    rule = quadrature(mesh.cell_kind, qdeg)
    J, _, meas = cell_geometry(mesh)
    vals, _ = eval_basis(dm.space, mesh.cell_kind, rule.points)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    out = np.zeros(dm.n_dofs)
    xq = np.einsum("cdk,qk->cqd", J, rule.points) + v0[:, None, :]
    fq = fn(xq.reshape(-1, mesh.dim)).reshape(len(meas), len(rule.points))
    contrib = np.einsum("q,cq,qi->ci", rule.weights, fq, vals) * meas[:, None]
    np.add.at(out, dm.cell_dofs, contrib)
    return out


# ----------------------------------------------------------------------
# the Stokes system
# ----------------------------------------------------------------------

@dataclass
class StokesSystem:
    mesh: Mesh
    combo: FECombo
    vel_dofmaps: list
    p_dofmap: DofMap
    A: sp.spmatrix            # block-diagonal component stiffness
    B: sp.spmatrix            # pressure rows x all velocity columns
    Mp: sp.spmatrix
    rhs: np.ndarray           # velocity load
    bc_mask: list             # per component bool arrays
    bc_values: list           # per component value arrays

    @property
    def offsets(self):
        sizes = [dm.n_dofs for dm in self.vel_dofmaps]
        return np.concatenate([[0], np.cumsum(sizes)])

    @property
    def n_velocity(self):
        return int(self.offsets[-1])

    def free_mask(self):
        return np.concatenate([~m for m in self.bc_mask])

    def constrained_values(self):
        return np.concatenate(self.bc_values)

    def interior_B(self):
        """Divergence block restricted to unconstrained velocity columns."""
        return self.B[:, self.free_mask()].tocsr()


def assemble(mesh, combo, qdeg=None):
    """Stiffness, divergence and pressure-mass blocks for the combination.

    Velocity boundary conditions default to homogeneous Dirichlet on all of
    the boundary; use cavity_problem or edit bc_values for anything else.
    """
    if isinstance(combo, str):
        combo = FECombo.parse(combo)
    if mesh.cell_kind != TRIANGLE:
        raise StokesError("global Stokes assembly is implemented for "
                          "triangular meshes")
    if combo.dim != mesh.dim:
        raise StokesError(f"combo {combo} has {combo.dim} velocity components "
                          f"for a {mesh.dim}D mesh")
    if qdeg is None:
        qdeg = 5
    vel_dms = [build_dofmap(mesh, t) for t in combo.velocity]
    p_dm = build_dofmap(mesh, combo.pressure)

    A = sp.block_diag([operator_matrix(mesh, dm, dm, "stiffness", qdeg)
                       for dm in vel_dms], format="csr")
    B = sp.hstack([operator_matrix(mesh, p_dm, dm, "deriv", qdeg,
                                   deriv_axis=k)
                   for k, dm in enumerate(vel_dms)], format="csr")
    Mp = operator_matrix(mesh, p_dm, p_dm, "mass", qdeg)
    rhs = np.zeros(sum(dm.n_dofs for dm in vel_dms))
    bc_mask = [dm.boundary_mask.copy() for dm in vel_dms]
    bc_values = [np.zeros(dm.n_dofs) for dm in vel_dms]
    return StokesSystem(mesh, combo, vel_dms, p_dm, A, B, Mp, rhs,
                        bc_mask, bc_values)


def _top_facets(mesh):
    tops = [f for f, tag in mesh.boundary_facets if tag == TOP]
    if not tops:
        raise StokesError("mesh has no boundary facets tagged as top")
    return tops


def cavity_problem(mesh, combo, variant="dirichlet_lid", qdeg=None):
    """Lid-driven cavity boundary conditions on a rectangle mesh.

    dirichlet_lid: first velocity component equals 1 on the top boundary
    (0 at the corners, no-slip wins) and 0 elsewhere; second component 0 on
    the whole boundary.  neumann_lid: the first component is free on the top
    with a unit conormal flux added to its load, fixed to 0 on the rest.
    """
    sys = assemble(mesh, combo, qdeg)
    u_dm = sys.vel_dofmaps[0]
    tops = _top_facets(mesh)
    top_vertices = {v for f in tops for v in f}
    ymax = mesh.vertices[:, 1].max()
    xmin = mesh.vertices[:, 0].min()
    xmax = mesh.vertices[:, 0].max()

    if variant == "dirichlet_lid":
        coords = u_dm.coords
        on_top = np.zeros(u_dm.n_dofs, dtype=bool)
        for dof in u_dm.boundary_dofs:
            x, y = coords[dof]
            if abs(y - ymax) < 1e-12 and xmin + 1e-12 < x < xmax - 1e-12:
                on_top[dof] = True
        sys.bc_values[0][on_top] = 1.0
    elif variant == "neumann_lid":
        # release the top dofs of the first component and add the flux term
        mask = sys.bc_mask[0]
        edge_w = {
            "p1": [0.5, 0.5], "p1b": [0.5, 0.5],
            "p2": [1 / 6, 1 / 6, 2 / 3],
        }[u_dm.space]
        nv = mesh.num_vertices
        edges = mesh.edges()
        eidx = {tuple(e): k for k, e in enumerate(map(tuple, edges))}
        for f in tops:
            a, b = int(f[0]), int(f[1])
            L = float(np.linalg.norm(mesh.vertices[a] - mesh.vertices[b]))
            sys.rhs[a] += edge_w[0] * L
            sys.rhs[b] += edge_w[1] * L
            if u_dm.space == "p2":
                mid = nv + eidx[tuple(sorted((a, b)))]
                sys.rhs[mid] += edge_w[2] * L
            mask[a] = mask[b] = False
            if u_dm.space == "p2":
                mask[nv + eidx[tuple(sorted((a, b)))]] = False
        # corners stay fixed (they also belong to the side walls)
        for v in top_vertices:
            x = mesh.vertices[int(v), 0]
            if abs(x - xmin) < 1e-12 or abs(x - xmax) < 1e-12:
                mask[int(v)] = True
    else:
        raise StokesError(f"unknown cavity variant {variant!r}")
    return sys


@dataclass
class Solution:
    velocity: list            # full coefficient vectors, one per component
    pressure: np.ndarray
    diagnostics: dict


def boundary_flux(sys, velocity):
    """Outflow integral of the discrete velocity over the domain boundary.

    Facet traces are polynomial (bubbles vanish on cell boundaries), so the
    edgewise trapezoid/Simpson values are exact and the sum equals the
    integral of div(w) over the domain.
    """
    import math

    mesh = sys.mesh
    cent = {}
    fmap = mesh.facet_map()
    terms = []
    nv = mesh.num_vertices
    edges = mesh.edges()
    eidx = {tuple(e): k for k, e in enumerate(map(tuple, edges))}
    for f, _tag in mesh.boundary_facets:
        a, b = int(f[0]), int(f[1])
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        t = pb - pa
        L = float(np.hypot(t[0], t[1]))
        n = np.array([t[1], -t[0]]) / L
        owner = fmap[tuple(sorted(f))][0]
        cc = mesh.vertices[mesh.cells[owner]].mean(axis=0)
        if float(n @ (pa - cc)) < 0:
            n = -n
        for k, dm in enumerate(sys.vel_dofmaps):
            w = velocity[k]
            if dm.space == P2:
                mid = nv + eidx[tuple(sorted((a, b)))]
                tr = L * (w[a] + 4.0 * w[mid] + w[b]) / 6.0
            else:
                tr = L * (w[a] + w[b]) / 2.0
            terms.append(float(n[k]) * tr)
    return math.fsum(terms)


def solve_penalized(sys, eps=1e-10):
    """Direct solve of the penalized saddle system.

    Reports the mean pressure (expected O(eps)) and the relative residual of
    the assembled equations in the diagnostics.
    """
    if eps <= 0:
        raise StokesError("penalization parameter must be positive")
    free = sys.free_mask()
    g = sys.constrained_values()
    A, B, Mp = sys.A.tocsr(), sys.B.tocsr(), sys.Mp.tocsr()
    Aff = A[free][:, free]
    Afc = A[free][:, ~free]
    Bf = B[:, free]
    Bc = B[:, ~free]
    gC = g[~free]
    f_f = sys.rhs[free] - Afc @ gC
    rhs2 = Bc @ gC
    K = sp.bmat([[Aff, -Bf.T], [-Bf, -eps * Mp]], format="csc")
    rhs = np.concatenate([f_f, rhs2])
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise StokesError(
            "singular saddle factorization (the penalized system should be "
            "regular; check assembly and boundary conditions)") from exc
    x = lu.solve(rhs)
    nf = int(free.sum())
    wf, p = x[:nf], x[nf:]
    resid = np.linalg.norm(K @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)

    full = np.empty(sys.n_velocity)
    full[free] = wf
    full[~free] = gC
    off = sys.offsets
    velocity = [full[off[k]:off[k + 1]] for k in range(len(sys.vel_dofmaps))]

    # The constant-pressure mode sits on an O(eps) eigenvalue, so the direct
    # solve leaves O(u/eps) noise in the pressure mean.  The mean row of the
    # system reads eps * (p, 1) = -int div(w) = -(boundary flux of w), an
    # identity in the boundary values only; re-impose it exactly.
    ones = np.ones(sys.p_dofmap.n_dofs)
    mp1 = Mp @ ones
    flux = boundary_flux(sys, velocity)
    target = -flux / eps
    p = p + (target - float(ones @ (Mp @ p))) / float(ones @ mp1) * ones
    int_p = float(ones @ (Mp @ p))
    return Solution(velocity, p, {"int_p": int_p, "residual": float(resid),
                                  "flux": flux, "eps": eps})


# ----------------------------------------------------------------------
# manufactured solution and convergence study
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedSolution:
    u: callable
    v: callable
    p: callable
    grad_u: callable
    grad_v: callable
    f: callable


def trig_solution():
    """Divergence-free benchmark with zero velocity trace on the unit square."""
    tp = 2 * np.pi

    def u(x):
        return np.cos(tp * x[:, 0]) * np.sin(tp * x[:, 1]) - np.sin(tp * x[:, 1])

    def v(x):
        return -np.cos(tp * x[:, 1]) * np.sin(tp * x[:, 0]) + np.sin(tp * x[:, 0])

    def p(x):
        return tp * (np.cos(tp * x[:, 1]) - np.cos(tp * x[:, 0]))

    def grad_u(x):
        gx = -tp * np.sin(tp * x[:, 0]) * np.sin(tp * x[:, 1])
        gy = tp * np.cos(tp * x[:, 1]) * (np.cos(tp * x[:, 0]) - 1.0)
        return np.stack([gx, gy], axis=1)

    def grad_v(x):
        gx = -tp * np.cos(tp * x[:, 0]) * (np.cos(tp * x[:, 1]) - 1.0)
        gy = tp * np.sin(tp * x[:, 1]) * np.sin(tp * x[:, 0])
        return np.stack([gx, gy], axis=1)

    def f(x):
        s0, c0 = np.sin(tp * x[:, 0]), np.cos(tp * x[:, 0])
        s1, c1 = np.sin(tp * x[:, 1]), np.cos(tp * x[:, 1])
        f1 = 2 * tp ** 2 * c0 * s1 - tp ** 2 * s1 + tp ** 2 * s0
        f2 = -2 * tp ** 2 * c1 * s0 + tp ** 2 * s0 - tp ** 2 * s1
        return np.stack([f1, f2], axis=1)

    return ManufacturedSolution(u, v, p, grad_u, grad_v, f)


def _field_errors(mesh, dm, dofs, exact, exact_grad, qdeg=7):
    rule = quadrature(mesh.cell_kind, qdeg)
    J, invJT, meas = cell_geometry(mesh)
    vals, grads = eval_basis(dm.space, mesh.cell_kind, rule.points)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    xq = np.einsum("cdk,qk->cqd", J, rule.points) + v0[:, None, :]
    flat = xq.reshape(-1, mesh.dim)
    cd = dofs[dm.cell_dofs]
    uh = np.einsum("qi,ci->cq", vals, cd)
    err2 = (uh - exact(flat).reshape(uh.shape)) ** 2
    l2 = float(np.einsum("q,cq,c->", rule.weights, err2, meas))
    h1 = None
    if exact_grad is not None:
        gphys = np.einsum("ckd,qid->cqik", invJT, grads)
        guh = np.einsum("cqik,ci->cqk", gphys, cd)
        gerr = guh - exact_grad(flat).reshape(guh.shape)
        h1 = float(np.einsum("q,cqk,c->", rule.weights, gerr ** 2, meas))
    return np.sqrt(l2), (np.sqrt(h1) if h1 is not None else None)


@dataclass
class ErrorReport:
    combo: FECombo
    rows: list                # dicts: h, eL2_u, eH1_u, eL2_v, eH1_v, eL2_p

    def orders(self):
        """Convergence orders between consecutive refinements."""
        out = []
        keys = ["eL2_u", "eH1_u", "eL2_v", "eH1_v", "eL2_p"]
        for a, b in zip(self.rows, self.rows[1:]):
            o = {"h": b["h"]}
            for k in keys:
                o["order_" + k[1:]] = (np.log(b[k] / a[k])
                                       / np.log(b["h"] / a["h"]))
            out.append(o)
        return out

    def to_csv(self, path):
        keys = ["h", "eL2_u", "eH1_u", "eL2_v", "eH1_v", "eL2_p"]
        okeys = ["order_L2_u", "order_H1_u", "order_L2_v", "order_H1_v",
                 "order_L2_p"]
        orders = self.orders()
        rows = []
        for i, r in enumerate(self.rows):
            row = [r[k] for k in keys]
            if i == 0:
                row += [""] * len(okeys)
            else:
                row += [orders[i - 1][k] for k in okeys]
            rows.append(row)
        write_csv(path, keys + okeys, rows)


def convergence_study(combo, meshes, exact=None, eps=1e-10, qdeg_err=7):
    """Solve on each mesh and report errors and orders.

    The exact solution must be divergence-free with zero boundary trace;
    this is spot-checked on the first mesh before any solve.
    """
    if isinstance(combo, str):
        combo = FECombo.parse(combo)
    if exact is None:
        exact = trig_solution()

    m0 = meshes[0]
    bnd = m0.vertices[m0.boundary_vertex_mask()]
    assert np.abs(exact.u(bnd)).max() < 1e-12
    assert np.abs(exact.v(bnd)).max() < 1e-12
    pts = np.random.default_rng(0).uniform(0.1, 0.9, size=(50, 2))
    div = exact.grad_u(pts)[:, 0] + exact.grad_v(pts)[:, 1]
    assert np.abs(div).max() < 1e-10

    rows = []
    for mesh in meshes:
        sys = assemble(mesh, combo)
        for k, dm in enumerate(sys.vel_dofmaps):
            sys.rhs[sys.offsets[k]:sys.offsets[k + 1]] = load_vector(
                mesh, dm, lambda x, k=k: exact.f(x)[:, k], qdeg=qdeg_err)
        sol = solve_penalized(sys, eps)
        ul2, uh1 = _field_errors(mesh, sys.vel_dofmaps[0], sol.velocity[0],
                                 exact.u, exact.grad_u, qdeg_err)
        vl2, vh1 = _field_errors(mesh, sys.vel_dofmaps[1], sol.velocity[1],
                                 exact.v, exact.grad_v, qdeg_err)
        # align the pressure mean with the zero-mean exact pressure
        area = mesh.cell_measures().sum()
        pshift = sol.pressure - sol.diagnostics["int_p"] / area
        pl2, _ = _field_errors(mesh, sys.p_dofmap, pshift, exact.p, None,
                               qdeg_err)
        rows.append({"h": mesh.metrics().h, "eL2_u": ul2, "eH1_u": uh1,
                     "eL2_v": vl2, "eH1_v": vh1, "eL2_p": pl2})
    return ErrorReport(combo, rows)
