import numpy as np
import pytest

from stokestab.mesh import gen_structured_tri, gen_zigzag, gen_quad_macro
from stokestab.macroelement import build_macroelements, predict_regularity
from stokestab.fixtures import (
    star_macro_2d, symmetric_hexagon, random_star_2d, random_s_zero_star,
    random_star_3d, meridian_star_3d,
)
from stokestab.infsup import (
    local_nullspace, nullspace_residual, analytic_singular_pressure,
    global_counterexample, infsup_constant,
)
from stokestab.stokes import assemble, StokesError

RING_Y_STRUCTURED = [(2, 0), (0.2, 1.8), (-2, 0), (-0.5, -1.8), (1.5, -1.8)]
RING_UNSTRUCTURED = [(2, 0.9), (-0.5, 1.8), (-2.5, -0.45), (-0.5, -1.8),
                     (1.5, -1.8)]


def test_local_nullspace_y_structured_bubble():
    macro = star_macro_2d(RING_Y_STRUCTURED)
    ns = local_nullspace(macro, "p1b-p1:p1")
    assert ns.dim == 1
    p = analytic_singular_pressure(macro, "p1b-p1:p1")
    assert p is not None
    assert nullspace_residual(ns, p) <= 1e-11
    # the numeric basis vector spans the same line (after mean removal)
    b = ns.basis[0]
    pm = p - p.mean() * 0  # raw profile, compare directionally
    cos = abs(b @ p) / (np.linalg.norm(b) * np.linalg.norm(p))
    # p may contain a constant component relative to the Mp inner product;
    # project it out before comparing
    assert ns.dim == 1 and cos > 0.5


def test_local_nullspace_unstructured_regular():
    macro = star_macro_2d(RING_UNSTRUCTURED)
    for combo in ["p1b-p1:p1", "p1-p1b:p1", "p2-p1:p1", "p1-p2:p1"]:
        ns = local_nullspace(macro, combo)
        assert ns.dim == 0, combo
        assert analytic_singular_pressure(macro, combo) is None


def test_local_nullspace_x_structured_swapped():
    ring = np.asarray(RING_Y_STRUCTURED, float)[::-1, ::-1]
    macro = star_macro_2d(ring)
    assert local_nullspace(macro, "p1-p1b:p1").dim == 1
    assert local_nullspace(macro, "p1b-p1:p1").dim == 0
    p = analytic_singular_pressure(macro, "p1-p1b:p1")
    ns = local_nullspace(macro, "p1-p1b:p1")
    assert nullspace_residual(ns, p) <= 1e-11


def test_hexagon_p2_singular_with_witness():
    macro = symmetric_hexagon()
    ns = local_nullspace(macro, "p2-p1:p1")
    assert ns.dim >= 1
    p = analytic_singular_pressure(macro, "p2-p1:p1")
    assert p is not None and np.linalg.norm(p) > 0
    assert nullspace_residual(ns, p) <= 1e-11


def test_two_aligned_p2_witness():
    ring = [(2.5, 0), (2.5, 1.5), (0, 1.5), (-2.5, 0), (-2.5, -1.5), (0, -1.5)]
    macro = star_macro_2d(ring)
    ns = local_nullspace(macro, "p2-p1:p1")
    assert ns.dim >= 1
    p = analytic_singular_pressure(macro, "p2-p1:p1")
    assert nullspace_residual(ns, p) <= 1e-11


def test_s_zero_fixture_witness():
    rng = np.random.default_rng(21)
    macro = random_s_zero_star(rng)
    ns = local_nullspace(macro, "p2-p1:p1")
    assert ns.dim >= 1
    p = analytic_singular_pressure(macro, "p2-p1:p1")
    assert p is not None
    assert nullspace_residual(ns, p) <= 1e-9


def test_structured_mesh_macros_all_singular_for_bubble():
    mesh = gen_structured_tri(4, 4)
    for macro in build_macroelements(mesh):
        ns = local_nullspace(macro, "p1b-p1:p1")
        assert ns.dim >= 1
        p = analytic_singular_pressure(macro, "p1b-p1:p1")
        assert nullspace_residual(ns, p) <= 1e-11


def test_oracle_agreement_smoke():
    rng = np.random.default_rng(33)
    combos = ["p1b-p1:p1", "p1-p1b:p1", "p2-p1:p1"]
    for _ in range(30):
        aligned = int(rng.integers(0, 3))
        axis = "y" if rng.integers(2) else "x"
        macro = random_star_2d(rng, aligned=aligned, axis=axis)
        for combo in combos:
            pred = predict_regularity(macro, combo)
            dim = local_nullspace(macro, combo).dim
            assert pred.regular == (dim == 0), (combo, aligned, axis)


def test_quad_macro_nullspace_and_counterexample():
    mesh = gen_quad_macro()
    macro = build_macroelements(mesh)[0]
    ns = local_nullspace(macro, "q2-q1:q1")
    assert ns.dim >= 1
    # plain absolute-offset pressure, zero at the aligned row
    p = np.abs(mesh.vertices[macro.vertex_ids()][:, 1])
    assert nullspace_residual(ns, p) <= 1e-12
    p2 = analytic_singular_pressure(macro, "q2-q1:q1")
    assert nullspace_residual(ns, p2) <= 1e-12


def test_quad_macro_asymmetric_widths():
    mesh = gen_quad_macro((0.7, 1.3), (1.0, 1.0))
    macro = build_macroelements(mesh)[0]
    ns = local_nullspace(macro, "q2-q1:q1")
    assert ns.dim >= 1
    p = analytic_singular_pressure(macro, "q2-q1:q1")
    assert nullspace_residual(ns, p) <= 1e-12


# ----------------------------------------------------------------------
# 3D local oracle
# ----------------------------------------------------------------------

def test_3d_generic_star_regular():
    rng = np.random.default_rng(2)
    macro = random_star_3d(rng)
    assert local_nullspace(macro, "p1-p1-p1b:p1").dim == 0
    assert local_nullspace(macro, "p1-p1b-p1b:p1").dim == 0


def test_3d_plane_split_two_bubble_singular():
    rng = np.random.default_rng(3)
    macro = meridian_star_3d(rng, [np.pi / 2, 3 * np.pi / 2])
    ns = local_nullspace(macro, "p1-p1b-p1b:p1")
    assert ns.dim >= 1
    p = analytic_singular_pressure(macro, "p1-p1b-p1b:p1")
    assert nullspace_residual(ns, p) <= 1e-11
    # with the bubble on the split axis instead, the macro is regular
    assert local_nullspace(macro, "p1b-p1-p1b:p1").dim == 0


def test_3d_one_bubble_aligned_semiplanes_singular():
    rng = np.random.default_rng(4)
    macro = meridian_star_3d(rng, [0.8, 0.8 + np.pi])
    ns = local_nullspace(macro, "p1-p1-p1b:p1")
    assert ns.dim >= 1
    p = analytic_singular_pressure(macro, "p1-p1-p1b:p1")
    assert p is not None
    assert nullspace_residual(ns, p) <= 1e-11


def test_3d_one_bubble_two_unaligned_regular():
    rng = np.random.default_rng(5)
    macro = meridian_star_3d(rng, [0.5, 2.4])
    assert local_nullspace(macro, "p1-p1-p1b:p1").dim == 0
    assert analytic_singular_pressure(macro, "p1-p1-p1b:p1") is None


def test_3d_three_semiplanes_singular():
    rng = np.random.default_rng(6)
    macro = meridian_star_3d(rng, [0.2, 2.0, 4.2])
    assert local_nullspace(macro, "p1-p1-p1b:p1").dim >= 1


# ----------------------------------------------------------------------
# global modes and the inf-sup constant
# ----------------------------------------------------------------------

def test_global_counterexample_values_4x3():
    mesh = gen_structured_tri(4, 3)
    p = global_counterexample(mesh, "p1b-p1:p1")
    ys = mesh.vertices[:, 1]
    expect = np.where(np.rint(ys * 3) % 2 == 0, 1 / 6, -1 / 6)
    assert np.allclose(p, expect)
    sys = assemble(mesh, "p1b-p1:p1")
    assert abs(np.ones(len(p)) @ (sys.Mp @ p)) < 1e-15
    Bt = sys.interior_B().T
    num = np.linalg.norm(Bt @ p)
    den = np.abs(Bt).max() * np.linalg.norm(p)
    assert num <= 1e-13 * max(den, 1)


def test_global_counterexample_both_combos():
    mesh = gen_structured_tri(8, 6)
    for combo in ["p1b-p1:p1", "p1-p1b:p1"]:
        p = global_counterexample(mesh, combo)
        sys = assemble(mesh, combo)
        Bt = sys.interior_B().T
        nB = np.linalg.norm(Bt.toarray(), 2)
        assert np.linalg.norm(Bt @ p) <= 1e-11 * nB * np.linalg.norm(p)


def test_global_counterexample_rejects_unstructured():
    mesh = gen_zigzag(4, 4)
    with pytest.raises(StokesError, match="layered"):
        global_counterexample(mesh, "p1b-p1:p1")


def test_infsup_structured_vanishes_unstructured_not():
    struct = gen_structured_tri(8, 8)
    r1 = infsup_constant(struct, "p1b-p1:p1", k=3)
    assert r1.beta <= 1e-7
    zz = gen_zigzag(8, 8)
    r2 = infsup_constant(zz, "p1b-p1:p1", k=3)
    assert r2.beta >= 0.01
    assert r2.spectrum[0] <= r2.spectrum[-1]


def test_infsup_scale_invariance():
    mesh = gen_zigzag(6, 6)
    base = infsup_constant(mesh, "p1b-p1:p1", k=1).beta
    for lam in (0.5, 2.0):
        scaled = mesh.replace_vertices(mesh.vertices * lam)
        b = infsup_constant(scaled, "p1b-p1:p1", k=1).beta
        assert np.isclose(b, base, rtol=1e-6)


def test_infsup_h_independence_stable_family():
    betas = []
    for n in (6, 12, 24):
        mesh = gen_zigzag(n, n)
        betas.append(infsup_constant(mesh, "p1b-p1:p1", k=1).beta)
    assert max(betas) / min(betas) <= 2.0
