"""Mesh data model, Gmsh MSH 2.2 / legacy VTK I/O, and purpose-built generators.

Meshes are simplicial (triangles in 2D, tetrahedra in 3D) or 2D rectangular
quadrilaterals.  Vertex and cell arrays are frozen after construction so a
Mesh can be shared freely; generators that modify geometry return new Mesh
objects.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

TRIANGLE = "triangle"
TETRAHEDRON = "tetrahedron"
QUADRILATERAL = "quadrilateral"

_CELL_SIZES = {TRIANGLE: 3, TETRAHEDRON: 4, QUADRILATERAL: 4}

# boundary tags used by the rectangle/box generators
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4


class MeshError(Exception):
    """Raised for parse errors, nonconforming meshes and bad generator input."""


def _cross2(u, v):
    """z-component of the cross product for stacks of 2D vectors."""
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


class Mesh:
    """Conforming mesh: vertex coordinates, cells, tagged boundary facets.

    Parameters
    ----------
    dim : 2 or 3
    cell_kind : one of 'triangle', 'tetrahedron', 'quadrilateral'
    vertices : (n, dim) float array
    cells : (m, k) int array, k = 3 (tri) or 4 (tet/quad)
    boundary_facets : optional list of (vertex tuple, tag); derived from the
        cell graph (facets incident to exactly one cell, tag 0) when omitted.
    """

    def __init__(self, dim, cell_kind, vertices, cells, boundary_facets=None,
                 orient=True, check=True):
        if cell_kind not in _CELL_SIZES:
            raise MeshError(f"unknown cell kind {cell_kind!r}")
        vertices = np.asarray(vertices, dtype=float).reshape(-1, dim)
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, _CELL_SIZES[cell_kind])
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise MeshError("cell vertex index out of range")
        self.dim = int(dim)
        self.cell_kind = cell_kind
        self.vertices = vertices
        self.cells = cells
        if orient:
            self._orient()
        if boundary_facets is None:
            boundary_facets = [(f, 0) for f in self._derive_boundary_facets()]
        self.boundary_facets = [(tuple(int(v) for v in f), int(t))
                                for f, t in boundary_facets]
        if check:
            self._check_conforming()
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)
        self._edge_cache = None

    # -- basic queries -------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    def cell_facets(self, cell):
        """Facets (edges in 2D, faces for tets) of one cell, as sorted tuples."""
        c = [int(v) for v in cell]
        if self.cell_kind == TRIANGLE:
            pairs = [(c[0], c[1]), (c[1], c[2]), (c[2], c[0])]
        elif self.cell_kind == QUADRILATERAL:
            pairs = [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
        else:
            pairs = [(c[0], c[1], c[2]), (c[0], c[1], c[3]),
                     (c[0], c[2], c[3]), (c[1], c[2], c[3])]
        return [tuple(sorted(p)) for p in pairs]

    def facet_map(self):
        """Map sorted facet tuple -> list of incident cell indices."""
        fmap = {}
        for ci, cell in enumerate(self.cells):
            for f in self.cell_facets(cell):
                fmap.setdefault(f, []).append(ci)
        return fmap

    def edges(self):
        """Unique mesh edges as a lexicographically sorted (e, 2) int array."""
        if self._edge_cache is None:
            pairs = set()
            for cell in self.cells:
                c = [int(v) for v in cell]
                n = len(c)
                if self.cell_kind == TETRAHEDRON:
                    idx = [(i, j) for i in range(4) for j in range(i + 1, 4)]
                else:
                    idx = [(i, (i + 1) % n) for i in range(n)]
                for i, j in idx:
                    pairs.add(tuple(sorted((c[i], c[j]))))
            self._edge_cache = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        return self._edge_cache

    def boundary_vertex_mask(self):
        mask = np.zeros(self.num_vertices, dtype=bool)
        for f, _ in self.boundary_facets:
            mask[list(f)] = True
        return mask

    def interior_vertices(self):
        return np.flatnonzero(~self.boundary_vertex_mask())

    def cell_measures(self):
        """Signed-positive cell areas/volumes."""
        v = self.vertices
        c = self.cells
        if self.cell_kind == TRIANGLE:
            a, b, d = v[c[:, 0]], v[c[:, 1]], v[c[:, 2]]
            return 0.5 * np.abs(_cross2(b - a, d - a))
        if self.cell_kind == QUADRILATERAL:
            x = v[c][:, :, 0]
            y = v[c][:, :, 1]
            s = x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y
            return 0.5 * np.abs(s.sum(axis=1))
        a, b, d, e = v[c[:, 0]], v[c[:, 1]], v[c[:, 2]], v[c[:, 3]]
        return np.abs(np.einsum("ij,ij->i", np.cross(b - a, d - a), e - a)) / 6.0

    def cell_diameters(self):
        pts = self.vertices[self.cells]
        k = pts.shape[1]
        dmax = np.zeros(len(pts))
        for i in range(k):
            for j in range(i + 1, k):
                d = np.linalg.norm(pts[:, i] - pts[:, j], axis=1)
                dmax = np.maximum(dmax, d)
        return dmax

    def metrics(self):
        meas = self.cell_measures()
        diam = self.cell_diameters()
        return MeshMetrics(h=float(diam.max()), min_area=float(meas.min()),
                           shape_ratio=float((diam**2 / meas).max()))

    def replace_vertices(self, new_vertices):
        """New mesh with the same topology and different coordinates."""
        return Mesh(self.dim, self.cell_kind, np.array(new_vertices),
                    self.cells.copy(), list(self.boundary_facets))

    # -- construction helpers -------------------------------------------

    def _orient(self):
        v, c = self.vertices, self.cells
        if self.cell_kind == TRIANGLE:
            a, b, d = v[c[:, 0]], v[c[:, 1]], v[c[:, 2]]
            neg = _cross2(b - a, d - a) < 0
            c[neg] = c[neg][:, [0, 2, 1]]
        elif self.cell_kind == TETRAHEDRON:
            a, b, d, e = v[c[:, 0]], v[c[:, 1]], v[c[:, 2]], v[c[:, 3]]
            neg = np.einsum("ij,ij->i", np.cross(b - a, d - a), e - a) < 0
            c[neg] = c[neg][:, [0, 1, 3, 2]]
        else:
            x = v[c][:, :, 0]
            y = v[c][:, :, 1]
            s = (x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y).sum(axis=1)
            neg = s < 0
            c[neg] = c[neg][:, ::-1]
        zero = self.cell_measures() <= 0
        if zero.any():
            raise MeshError(f"degenerate cell(s) {np.flatnonzero(zero)[:5].tolist()}")

    def _derive_boundary_facets(self):
        return [f for f, cs in self.facet_map().items() if len(cs) == 1]

    def _check_conforming(self):
        fmap = self.facet_map()
        for f, cs in fmap.items():
            if len(cs) > 2:
                raise MeshError(
                    f"nonconforming mesh: facet {f} shared by cells {cs[0]} and {cs[1]} "
                    f"plus {len(cs) - 2} more")
        for f, tag in self.boundary_facets:
            key = tuple(sorted(f))
            cs = fmap.get(key)
            if cs is None or len(cs) != 1:
                raise MeshError(f"boundary facet {f} does not bound exactly one cell")
        # duplicated vertex coordinates are the usual source of nonconformity
        order = np.lexsort(self.vertices.T[::-1])
        sv = self.vertices[order]
        if len(sv) > 1:
            same = np.all(np.abs(np.diff(sv, axis=0)) < 1e-14, axis=1)
            if same.any():
                i = int(np.flatnonzero(same)[0])
                raise MeshError(
                    f"duplicate vertex coordinates at indices "
                    f"{int(order[i])} and {int(order[i + 1])}")

    def validate(self, geometric=False):
        """Run conformity checks; with geometric=True also scan for hanging
        vertices lying in the interior of another cell's edge (O(V*E), meant
        for small test meshes)."""
        self._check_conforming()
        if geometric and self.dim == 2:
            edges = self.edges()
            v = self.vertices
            for e0, e1 in edges:
                a, b = v[e0], v[e1]
                ab = b - a
                L2 = float(ab @ ab)
                for w in range(self.num_vertices):
                    if w == e0 or w == e1:
                        continue
                    t = float((v[w] - a) @ ab) / L2
                    if 1e-9 < t < 1 - 1e-9:
                        p = a + t * ab
                        if np.linalg.norm(v[w] - p) < 1e-12 * np.sqrt(L2):
                            raise MeshError(
                                f"hanging vertex {w} on edge ({e0}, {e1})")
        return True


@dataclass(frozen=True)
class MeshMetrics:
    h: float
    min_area: float
    shape_ratio: float


# ----------------------------------------------------------------------
# Gmsh MSH 2.2 ASCII
# ----------------------------------------------------------------------

_MSH_LINE, _MSH_TRI, _MSH_QUAD, _MSH_TET = 1, 2, 3, 4
_MSH_POINT = 15


def load_msh(path):
    """Read a Gmsh MSH 2.2 ASCII file.

    Lines become tagged boundary facets in 2D, triangles become boundary
    facets in 3D; triangles/quads/tets become cells.  Raises MeshError with
    a line number on malformed input and rejects nonconforming meshes.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()

    def err(i, msg):
        return MeshError(f"{path}:{i + 1}: {msg}")

    i = 0
    nodes = {}
    elements = []  # (etype, tag, node ids)
    saw_format = False
    while i < len(lines):
        tok = lines[i].strip()
        if tok == "$MeshFormat":
            parts = lines[i + 1].split()
            if not parts or not parts[0].startswith("2.2"):
                raise err(i + 1, f"unsupported MSH version {parts[:1]}; "
                                 "only 2.2 ASCII is handled")
            saw_format = True
            i += 3
        elif tok == "$Nodes":
            try:
                n = int(lines[i + 1])
            except (ValueError, IndexError):
                raise err(i + 1, "bad node count")
            for k in range(n):
                parts = lines[i + 2 + k].split()
                if len(parts) != 4:
                    raise err(i + 2 + k, "expected 'id x y z'")
                nodes[int(parts[0])] = [float(p) for p in parts[1:]]
            i += n + 3
        elif tok == "$Elements":
            try:
                n = int(lines[i + 1])
            except (ValueError, IndexError):
                raise err(i + 1, "bad element count")
            for k in range(n):
                parts = lines[i + 2 + k].split()
                try:
                    etype = int(parts[1])
                    ntags = int(parts[2])
                    tags = [int(t) for t in parts[3:3 + ntags]]
                    conn = [int(p) for p in parts[3 + ntags:]]
                except (ValueError, IndexError):
                    raise err(i + 2 + k, "malformed element record")
                elements.append((etype, tags[0] if tags else 0, conn))
            i += n + 3
        else:
            i += 1
    if not saw_format:
        raise MeshError(f"{path}: missing $MeshFormat section")
    if not nodes:
        raise MeshError(f"{path}: missing $Nodes section")

    ids = sorted(nodes)
    remap = {nid: k for k, nid in enumerate(ids)}
    coords3 = np.array([nodes[nid] for nid in ids])

    tets = [(t, c) for e, t, c in elements if e == _MSH_TET]
    tris = [(t, c) for e, t, c in elements if e == _MSH_TRI]
    quads = [(t, c) for e, t, c in elements if e == _MSH_QUAD]
    segs = [(t, c) for e, t, c in elements if e == _MSH_LINE]

    if tets:
        dim, kind, cellrecs, facetrecs = 3, TETRAHEDRON, tets, tris
    elif tris and quads:
        raise MeshError(f"{path}: mixed triangle/quad meshes are not supported")
    elif tris:
        dim, kind, cellrecs, facetrecs = 2, TRIANGLE, tris, segs
    elif quads:
        dim, kind, cellrecs, facetrecs = 2, QUADRILATERAL, quads, segs
    else:
        raise MeshError(f"{path}: no triangle/quad/tet elements found")

    verts = coords3[:, :dim]
    if dim == 2 and np.abs(coords3[:, 2]).max(initial=0.0) > 1e-12:
        raise MeshError(f"{path}: 2D element mesh with nonzero z coordinates")
    cells = [[remap[v] for v in c] for _, c in cellrecs]
    facets = [(tuple(remap[v] for v in c), t) for t, c in facetrecs] or None
    return Mesh(dim, kind, verts, cells, boundary_facets=facets)


_MSH_KIND = {TRIANGLE: _MSH_TRI, QUADRILATERAL: _MSH_QUAD, TETRAHEDRON: _MSH_TET}
_FACET_KIND = {TRIANGLE: _MSH_LINE, QUADRILATERAL: _MSH_LINE, TETRAHEDRON: _MSH_TRI}


def save_msh(mesh, path):
    """Write the mesh as Gmsh MSH 2.2 ASCII (inverse of load_msh)."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes",
           str(mesh.num_vertices)]
    for i, p in enumerate(mesh.vertices):
        x, y = p[0], p[1]
        z = p[2] if mesh.dim == 3 else 0.0
        out.append(f"{i + 1} {x:.17g} {y:.17g} {z:.17g}")
    out.append("$EndNodes")
    out.append("$Elements")
    out.append(str(len(mesh.boundary_facets) + mesh.num_cells))
    eid = 1
    ft = _FACET_KIND[mesh.cell_kind]
    for f, tag in mesh.boundary_facets:
        conn = " ".join(str(v + 1) for v in f)
        out.append(f"{eid} {ft} 2 {tag} {tag} {conn}")
        eid += 1
    ct = _MSH_KIND[mesh.cell_kind]
    for c in mesh.cells:
        conn = " ".join(str(v + 1) for v in c)
        out.append(f"{eid} {ct} 2 0 0 {conn}")
        eid += 1
    out.append("$EndElements")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# ----------------------------------------------------------------------
# VTK legacy writer
# ----------------------------------------------------------------------

_VTK_TYPE = {TRIANGLE: 5, QUADRILATERAL: 9, TETRAHEDRON: 10}


def save_vtk(mesh, fields, path, title="stokestab output"):
    """Write a legacy-ASCII VTK UNSTRUCTURED_GRID file.

    fields maps name -> scalar array; arrays of vertex length go to
    POINT_DATA, arrays of cell length to CELL_DATA.  Raises MeshError on a
    length mismatch.
    """
    point_fields, cell_fields = {}, {}
    for name, arr in (fields or {}).items():
        arr = np.asarray(arr, dtype=float).ravel()
        if len(arr) == mesh.num_vertices:
            point_fields[name] = arr
        elif len(arr) == mesh.num_cells:
            cell_fields[name] = arr
        else:
            raise MeshError(
                f"field {name!r} has length {len(arr)}, expected "
                f"{mesh.num_vertices} (vertices) or {mesh.num_cells} (cells)")

    k = mesh.cells.shape[1]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.num_vertices} double\n")
        for p in mesh.vertices:
            z = p[2] if mesh.dim == 3 else 0.0
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {z:.17g}\n")
        fh.write(f"CELLS {mesh.num_cells} {mesh.num_cells * (k + 1)}\n")
        for c in mesh.cells:
            fh.write(str(k) + " " + " ".join(str(v) for v in c) + "\n")
        fh.write(f"CELL_TYPES {mesh.num_cells}\n")
        vt = _VTK_TYPE[mesh.cell_kind]
        for _ in range(mesh.num_cells):
            fh.write(f"{vt}\n")
        if point_fields:
            fh.write(f"POINT_DATA {mesh.num_vertices}\n")
            for name, arr in point_fields.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(f"{x:.17g}" for x in arr) + "\n")
        if cell_fields:
            fh.write(f"CELL_DATA {mesh.num_cells}\n")
            for name, arr in cell_fields.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(f"{x:.17g}" for x in arr) + "\n")


def write_csv(path, header, rows):
    """Comma-separated metrics table with a header row and '.' decimals."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.12g}" if isinstance(x, float) else x for x in row])


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------

def _rect_boundary_facets(verts, facets, lo, hi, tol=1e-12):
    """Tag rectangle boundary edges: bottom=1, right=2, top=3, left=4."""
    tagged = []
    for f in facets:
        mid = verts[list(f)].mean(axis=0)
        if abs(mid[1] - lo[1]) < tol:
            tag = BOTTOM
        elif abs(mid[0] - hi[0]) < tol:
            tag = RIGHT
        elif abs(mid[1] - hi[1]) < tol:
            tag = TOP
        elif abs(mid[0] - lo[0]) < tol:
            tag = LEFT
        else:
            tag = 0
        tagged.append((f, tag))
    return tagged


def _grid_vertices(nx, ny, lo, hi):
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    X, Y = np.meshgrid(xs, ys)  # vertex (i, j) at flat index j*(nx+1)+i
    verts = np.column_stack([X.ravel(), Y.ravel()])
    return verts, xs, ys


def gen_structured_tri(nx, ny, domain=((0.0, 0.0), (1.0, 1.0))):
    """Uniform grid of rectangles, every one split by the same '/' diagonal.

    Interior vertices end up with exactly 6 incident triangles, two ring
    neighbours horizontally aligned and two vertically aligned; the mesh is
    layered in uniform horizontal bands.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx, ny must be >= 1")
    lo, hi = np.asarray(domain[0], float), np.asarray(domain[1], float)
    if not np.all(hi > lo):
        raise MeshError("degenerate rectangle")
    verts, _, _ = _grid_vertices(nx, ny, lo, hi)

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, d))
    mesh = Mesh(2, TRIANGLE, verts, cells, check=False)
    facets = _rect_boundary_facets(verts, mesh._derive_boundary_facets(), lo, hi)
    return Mesh(2, TRIANGLE, verts, cells, boundary_facets=facets)


def gen_zigzag(nx, ny):
    """Herringbone mesh of the unit square: x-structured, y-unstructured.

    Grid quads are split by diagonals whose direction alternates per column,
    and every non-corner vertex off the top/bottom boundary is displaced
    vertically by +-dy/4 with sign alternating per column.  Each interior
    vertex keeps exactly two vertically aligned neighbours (so a vertical
    line splits its macro-element) while no ring vertex is horizontally
    aligned with it.  The fully interior macro-elements are centrally
    symmetric hexagons with pairwise equal areas.
    """
    if nx < 2 or ny < 2:
        raise MeshError("nx, ny must be >= 2")
    lo, hi = (0.0, 0.0), (1.0, 1.0)
    verts, xs, ys = _grid_vertices(nx, ny, lo, hi)
    dy = 1.0 / ny
    delta = 0.25 * dy

    def vid(i, j):
        return j * (nx + 1) + i

    for j in range(1, ny):
        for i in range(nx + 1):
            verts[vid(i, j), 1] += delta if i % 2 == 0 else -delta

    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if i % 2 == 0:
                cells.append((a, b, c))
                cells.append((a, c, d))
            else:
                cells.append((a, b, d))
                cells.append((b, c, d))
    mesh = Mesh(2, TRIANGLE, verts, cells, check=False)
    facets = _rect_boundary_facets(verts, mesh._derive_boundary_facets(), lo, hi)
    return Mesh(2, TRIANGLE, verts, cells, boundary_facets=facets)


def gen_perturbed(base, amplitude, seed):
    """Displace interior vertices in x by uniform(-amplitude, amplitude).

    Boundary vertices are fixed.  A displacement that would shrink any
    incident cell below 10% of its unperturbed measure is halved until the
    mesh stays valid, so the result is always positively oriented.
    Deterministic for a given seed.
    """
    if base.dim != 2:
        raise MeshError("gen_perturbed expects a 2D mesh")
    if amplitude < 0:
        raise MeshError("amplitude must be >= 0")
    rng = np.random.default_rng(seed)
    interior = base.interior_vertices()
    disp = rng.uniform(-amplitude, amplitude, size=len(interior))
    verts = base.vertices.copy()

    v2c = {}
    for ci, cell in enumerate(base.cells):
        for v in cell:
            v2c.setdefault(int(v), []).append(ci)

    def areas_of(cids):
        out = []
        for ci in cids:
            a, b, c = verts[base.cells[ci]]
            out.append(0.5 * float(_cross2(b - a, c - a)))
        return np.array(out)

    for v, d in zip(interior, disp):
        cids = v2c.get(int(v), [])
        ref = areas_of(cids)
        scale = 1.0
        x0 = verts[v, 0]
        for _ in range(60):
            verts[v, 0] = x0 + scale * d
            if np.all(areas_of(cids) >= 0.1 * ref):
                break
            scale *= 0.5
        else:
            verts[v, 0] = x0
    return base.replace_vertices(verts)


def gen_extruded_tet(base2d, layers, height=1.0):
    """Extrude a triangular mesh into `layers` uniform tet layers.

    Each prism is cut into 3 tetrahedra with diagonals fixed by global vertex
    order, which makes the splits agree across neighbouring prisms.  The
    result is z-structured by construction and inherits x/y structure from
    the base mesh.
    """
    if base2d.cell_kind != TRIANGLE:
        raise MeshError("gen_extruded_tet expects a triangular base mesh")
    if layers < 1:
        raise MeshError("layers must be >= 1")
    nv = base2d.num_vertices
    zs = np.linspace(0.0, height, layers + 1)
    verts = np.vstack([
        np.column_stack([base2d.vertices, np.full(nv, z)]) for z in zs])

    cells = []
    for L in range(layers):
        lo_off, hi_off = L * nv, (L + 1) * nv
        for tri in base2d.cells:
            a, b, c = sorted(int(v) for v in tri)
            a0, b0, c0 = a + lo_off, b + lo_off, c + lo_off
            a1, b1, c1 = a + hi_off, b + hi_off, c + hi_off
            cells.append((a0, b0, c0, c1))
            cells.append((a0, b0, c1, b1))
            cells.append((a0, b1, c1, a1))
    mesh = Mesh(3, TETRAHEDRON, verts, cells, check=False)
    facets = []
    for f in mesh._derive_boundary_facets():
        z = verts[list(f), 2]
        if np.all(np.abs(z) < 1e-12):
            tag = BOTTOM
        elif np.all(np.abs(z - height) < 1e-12):
            tag = TOP
        else:
            tag = RIGHT
        facets.append((f, tag))
    out = Mesh(3, TETRAHEDRON, verts, cells, boundary_facets=facets)
    assert len(out.cells) == 3 * layers * base2d.num_cells
    return out


def gen_structured_cube(nx, ny, nz, domain=((0, 0, 0), (1, 1, 1))):
    """Box split into nx*ny*nz hexahedra, each cut into 6 Kuhn tetrahedra.

    All tets in a hexahedron share its main diagonal; the pattern is
    translation invariant, hence conforming across hexahedra.
    """
    lo = np.asarray(domain[0], float)
    hi = np.asarray(domain[1], float)
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    zs = np.linspace(lo[2], hi[2], nz + 1)
    verts = np.array([(x, y, z) for z in zs for y in ys for x in xs])

    def vid(i, j, k):
        return (k * (ny + 1) + j) * (nx + 1) + i

    # vertex orders along the 6 monotone paths from (0,0,0) to (1,1,1)
    paths = [((1, 0, 0), (0, 1, 0), (0, 0, 1)), ((1, 0, 0), (0, 0, 1), (0, 1, 0)),
             ((0, 1, 0), (1, 0, 0), (0, 0, 1)), ((0, 1, 0), (0, 0, 1), (1, 0, 0)),
             ((0, 0, 1), (1, 0, 0), (0, 1, 0)), ((0, 0, 1), (0, 1, 0), (1, 0, 0))]
    cells = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                for path in paths:
                    p = np.array((i, j, k))
                    tet = [vid(*p)]
                    for step in path:
                        p = p + step
                        tet.append(vid(*p))
                    cells.append(tet)
    return Mesh(3, TETRAHEDRON, verts, cells)


def gen_quad_macro(widths=(1.0, 1.0), heights=(1.0, 1.0)):
    """2x2 rectangle macro-element with the shared vertex at the origin."""
    w1, w2 = widths
    h1, h2 = heights
    if min(w1, w2, h1, h2) <= 0:
        raise MeshError("widths and heights must be positive")
    xs = [-w1, 0.0, w2]
    ys = [-h1, 0.0, h2]
    verts = np.array([(x, y) for y in ys for x in xs])

    def vid(i, j):
        return j * 3 + i

    cells = []
    for j in range(2):
        for i in range(2):
            cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    mesh = Mesh(2, QUADRILATERAL, verts, cells, check=False)
    facets = _rect_boundary_facets(verts, mesh._derive_boundary_facets(),
                                   (-w1, -h1), (w2, h2))
    return Mesh(2, QUADRILATERAL, verts, cells, boundary_facets=facets)
