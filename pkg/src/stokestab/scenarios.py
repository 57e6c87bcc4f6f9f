"""Named batch scenarios: generate, solve, analyze and tabulate.

Every scenario is deterministic given its seed, writes its CSV/VTK artifacts
into an output directory, and returns a result object with a one-screen
summary plus named check values that the CLI compares against the versioned
thresholds in data/checks.ini when --check is passed.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .infsup import infsup_constant, local_nullspace, nullspace_residual
from .macroelement import (build_macroelements, classify_3d,
                           predict_regularity, predict_regularity_3d,
                           structure_report)
from .mesh import (Mesh, TRIANGLE, gen_extruded_tet, gen_perturbed,
                   gen_quad_macro, gen_structured_cube, gen_structured_tri,
                   gen_zigzag, save_msh, save_vtk, write_csv)
from .stokes import cavity_problem, convergence_study, solve_penalized
from .unstructure import UnstructureConfig, apply_algorithm1, verify_uniform


@dataclass
class Check:
    name: str
    value: float
    ok: bool


@dataclass
class ScenarioResult:
    name: str
    summary: list            # printable lines
    artifacts: list          # written file paths
    checks: list             # Check entries (empty without --check)

    @property
    def passed(self):
        return all(c.ok for c in self.checks)


def load_thresholds():
    cfg = configparser.ConfigParser()
    with resources.files("stokestab.data").joinpath("checks.ini").open() as fh:
        cfg.read_file(fh)
    return cfg


def _th(cfg, section, key):
    return float(cfg[section][key])


# ----------------------------------------------------------------------
# mesh families
# ----------------------------------------------------------------------

def unstructured_family_mesh(level, seed=42, r=0.15):
    """Self-contained uniformly y-unstructured mesh at h ~ 2^-level:
    structured grid, random x jitter, then the alignment-removing sweep."""
    n = 2 ** level
    mesh = gen_structured_tri(n, n)
    mesh = gen_perturbed(mesh, 0.3 / n, seed + level)
    return apply_algorithm1(mesh, UnstructureConfig(r=r, axis="y"))


def _swap_xy(mesh):
    return Mesh(2, TRIANGLE, mesh.vertices[:, ::-1].copy(),
                mesh.cells.copy())


def decay_family_mesh(level, seed=10):
    """Level k of the converging-to-structured family: the structured grid
    with 3, 7, 15, 31 intervals carries a vertical jitter of relative
    amplitude 0.4, 0.2, 0.1, 0.05; level 5 is the exact structured grid with
    63 intervals, where the alternating-layer pressure is an exact spurious
    mode."""
    ns = [3, 7, 15, 31, 63]
    amps = [0.4, 0.2, 0.1, 0.05, 0.0]
    n, amp = ns[level - 1], amps[level - 1]
    base = gen_structured_tri(n, n)
    if amp == 0.0:
        return base
    pert = gen_perturbed(_swap_xy(base), amp / n, seed + level)
    return _swap_xy(pert)


# ----------------------------------------------------------------------
# scenarios
# ----------------------------------------------------------------------

def run_test1(out_dir, seed=42, check=False, eps=1e-10, **kw):
    """Lid cavity on the herringbone mesh; the penalization fixes the
    pressure mean, reported in the summary."""
    mesh = gen_zigzag(15, 15)
    sys = cavity_problem(mesh, "p1b-p1:p1", "dirichlet_lid")
    sol = solve_penalized(sys, eps)
    nv = mesh.num_vertices
    vtk = os.path.join(out_dir, "test1_cavity.vtk")
    save_vtk(mesh, {"u": sol.velocity[0][:nv], "v": sol.velocity[1][:nv],
                    "p": sol.pressure}, vtk)
    int_p = sol.diagnostics["int_p"]
    summary = [f"herringbone 15x15 cavity, p1b-p1:p1, eps={eps:g}, seed={seed}",
               f"mean pressure int_p = {int_p:.6e}",
               f"solver residual = {sol.diagnostics['residual']:.2e}"]
    checks = []
    if check:
        cfg = load_thresholds()
        lim = _th(cfg, "test1", "max_abs_int_p")
        checks.append(Check("abs_int_p<=%.0e" % lim, abs(int_p),
                            abs(int_p) <= lim))
    return ScenarioResult("test1", summary, [vtk], checks)


def run_test2(out_dir, seed=42, check=False, eps=1e-10, **kw):
    """Traction-driven cavity on an unstructured and a structured mesh; the
    structured pressure develops the alternating-layer oscillations."""
    artifacts = []
    summary = [f"traction lid cavity, p1b-p1:p1, seed={seed}"]
    meshes = {"unstructured": unstructured_family_mesh(4, seed),
              "structured": gen_structured_tri(16, 16)}
    rough = {}
    for tag, mesh in meshes.items():
        sys = cavity_problem(mesh, "p1b-p1:p1", "neumann_lid")
        sol = solve_penalized(sys, eps)
        nv = mesh.num_vertices
        path = os.path.join(out_dir, f"test2_{tag}.vtk")
        save_vtk(mesh, {"u": sol.velocity[0][:nv], "v": sol.velocity[1][:nv],
                        "p": sol.pressure}, path)
        artifacts.append(path)
        # vertical roughness of the pressure: mean absolute second
        # difference along mesh edges, large for the layered oscillation
        p = sol.pressure
        diffs = []
        for a, b in mesh.edges():
            diffs.append(abs(p[a] - p[b]))
        rough[tag] = float(np.mean(diffs))
        summary.append(f"  {tag}: mean edge pressure jump {rough[tag]:.3f}")
    summary.append("  oscillation ratio structured/unstructured = "
                   f"{rough['structured'] / rough['unstructured']:.2f}")
    return ScenarioResult("test2", summary, artifacts, [])


def _convergence_scenario(name, combo, out_dir, seed, check, levels, section):
    levels = levels or [3, 4, 5, 6]
    meshes = [unstructured_family_mesh(l, seed) for l in levels]
    rep = convergence_study(combo, meshes)
    csv = os.path.join(out_dir, f"{name}_orders.csv")
    rep.to_csv(csv)
    last = rep.orders()[-1]
    summary = [f"{name}: {combo} on levels {levels}, seed={seed}",
               "  last-interval orders: " + "  ".join(
                   f"{k.removeprefix('order_')}={v:.3f}"
                   for k, v in last.items() if k != "h")]
    checks = []
    if check:
        cfg = load_thresholds()
        for key in cfg[section]:
            # keys look like order_l2_u_min / order_l2_u_max
            base, kind = key.rsplit("_", 1)
            val = last["order_" + base.removeprefix("order_")
                       .replace("l2", "L2").replace("h1", "H1")]
            lim = _th(cfg, section, key)
            ok = val >= lim if kind == "min" else val <= lim
            checks.append(Check(f"{key}({lim:g})", float(val), ok))
    return ScenarioResult(name, summary, [csv], checks)


def run_test3(out_dir, seed=42, check=False, levels=None, **kw):
    return _convergence_scenario("test3", "p1b-p1:p1", out_dir, seed, check,
                                 levels, "test3")


def run_test8(out_dir, seed=42, check=False, levels=None, **kw):
    return _convergence_scenario("test8", "p2-p1:p1", out_dir, seed, check,
                                 levels, "test8")


def run_test4(out_dir, seed=42, check=False, r=0.15, **kw):
    """Alignment-removing repair of the 16x16 structured grid and its effect
    on the inf-sup constant of the bubble combination."""
    mesh = gen_structured_tri(16, 16)
    cfg_y = UnstructureConfig(r=r, axis="y")
    before = infsup_constant(mesh, "p1b-p1:p1", k=1).beta
    repaired = apply_algorithm1(mesh, cfg_y)
    rep = verify_uniform(repaired, cfg_y)
    after = infsup_constant(repaired, "p1b-p1:p1", k=1).beta
    msh = os.path.join(out_dir, "test4_repaired.msh")
    save_msh(repaired, msh)
    summary = [f"repair 16x16 structured, r={r}, axis=y, seed={seed}",
               f"  verify_uniform: passed={rep.passed} margin={rep.margin:.3f}",
               f"  beta before={before:.3e} after={after:.3e}"]
    checks = []
    if check:
        cfg = load_thresholds()
        checks.append(Check("verify_uniform", float(rep.passed), rep.passed))
        lim = _th(cfg, "test4", "beta_before_max")
        checks.append(Check(f"beta_before<={lim:g}", before, before <= lim))
        lim = _th(cfg, "test4", "beta_after_min")
        checks.append(Check(f"beta_after>={lim:g}", after, after >= lim))
    return ScenarioResult("test4", summary, [msh], checks)


_CUBE_COMBOS = ["p1-p1b-p1b:p1", "p1b-p1-p1b:p1", "p1b-p1b-p1:p1",
                "p1-p1-p1b:p1", "p1b-p1-p1:p1", "p1-p1b-p1:p1"]


def _local_3d_table(mesh, combos):
    macros = build_macroelements(mesh)
    rows = []
    agree = total = 0
    for m in macros:
        flags = classify_3d(m)
        for combo in combos:
            v = predict_regularity_3d(m, combo)
            dim = local_nullspace(m, combo).dim
            ok = v.regular == (dim == 0)
            agree += ok
            total += 1
            rows.append([int(m.center), combo, int(flags.x_structured),
                         int(flags.y_structured), int(flags.z_structured),
                         flags.semi_plane_count, v.predicted, dim, int(ok)])
    return rows, agree, total, macros


def run_test5(out_dir, seed=42, check=False, **kw):
    """Structured cube at the macro-element level: every enriched
    combination is locally singular, and the numeric nullspace agrees."""
    mesh = gen_structured_cube(3, 3, 3)
    rows, agree, total, macros = _local_3d_table(mesh, _CUBE_COMBOS)
    csv = os.path.join(out_dir, "test5_cube_local.csv")
    write_csv(csv, ["vertex", "combo", "x_str", "y_str", "z_str",
                    "semi_planes", "predicted", "numeric_dim", "agree"], rows)
    singular = sum(1 for r in rows if r[6] == "singular")
    summary = [f"structured cube 3x3x3 ({mesh.num_cells} tets, "
               f"{len(macros)} macros), seed={seed}",
               f"  predicted singular {singular}/{total}, "
               f"numeric agreement {agree}/{total}"]
    checks = []
    if check:
        cfg = load_thresholds()
        lim = _th(cfg, "test5", "min_agreement")
        checks.append(Check("agreement", agree / total, agree / total >= lim))
    return ScenarioResult("test5", summary, [csv], checks)


def run_test6(out_dir, seed=42, check=False, **kw):
    """Extruded unstructured base: the layer planes make every macro
    z-structured, and the walls above the base edges split each star into
    vertical wedges, so single-bubble combinations are locally singular
    even though the base is unstructured."""
    base = unstructured_family_mesh(3, seed)
    base = apply_algorithm1(base, UnstructureConfig(r=0.15, axis="x"))
    mesh = gen_extruded_tet(base, 4, 1.0)
    combos = ["p1-p1-p1b:p1", "p1b-p1-p1:p1", "p1-p1b-p1b:p1"]
    rows, agree, total, macros = _local_3d_table(mesh, combos)
    csv = os.path.join(out_dir, "test6_extruded_local.csv")
    write_csv(csv, ["vertex", "combo", "x_str", "y_str", "z_str",
                    "semi_planes", "predicted", "numeric_dim", "agree"], rows)
    z_struct = sum(1 for r in rows if r[4] == 1) // len(combos)
    summary = [f"extruded mesh: {mesh.num_cells} tets, {len(macros)} macros, "
               f"seed={seed}",
               f"  z-structured macros: {z_struct}/{len(macros)}",
               f"  numeric agreement {agree}/{total}"]
    checks = []
    if check:
        cfg = load_thresholds()
        lim = _th(cfg, "test6", "min_agreement")
        checks.append(Check("agreement", agree / total, agree / total >= lim))
        checks.append(Check("all_z_structured", z_struct / len(macros),
                            z_struct == len(macros)))
    return ScenarioResult("test6", summary, [csv], checks)


def run_test7(out_dir, seed=10, check=False, **kw):
    """Inf-sup decay on the family converging to the structured grid."""
    betas = []
    rows = []
    for level in range(1, 6):
        mesh = decay_family_mesh(level, seed)
        res = infsup_constant(mesh, "p2-p1:p1", k=3)
        betas.append(res.beta)
        rows.append([level, mesh.metrics().h, res.beta]
                    + list(res.spectrum[:3]))
    csv = os.path.join(out_dir, "test7_betas.csv")
    write_csv(csv, ["level", "h", "beta", "lam1", "lam2", "lam3"], rows)
    summary = [f"p2-p1:p1 inf-sup decay, seed={seed}",
               "  beta: " + "  ".join(f"{b:.4g}" for b in betas)]
    checks = []
    if check:
        cfg = load_thresholds()
        strict = all(betas[i] > betas[i + 1] for i in range(4))
        checks.append(Check("strictly_decreasing", float(strict), strict))
        lim = _th(cfg, "test7", "beta_level1_ratio_max")
        ratio = betas[4] / betas[0] if betas[0] > 0 else np.inf
        checks.append(Check(f"beta5/beta1<={lim:g}", ratio, ratio <= lim))
    return ScenarioResult("test7", summary, [csv], checks)


def run_test9(out_dir, seed=42, check=False, eps=1e-10, **kw):
    """Quadratic-velocity cavity on unstructured and structured meshes."""
    artifacts = []
    summary = [f"cavity with p2-p1:p1, seed={seed}"]
    for tag, mesh in [("unstructured", unstructured_family_mesh(4, seed)),
                      ("structured", gen_structured_tri(16, 16))]:
        sys = cavity_problem(mesh, "p2-p1:p1", "dirichlet_lid")
        sol = solve_penalized(sys, eps)
        path = os.path.join(out_dir, f"test9_{tag}.vtk")
        save_vtk(mesh, {"p": sol.pressure}, path)
        artifacts.append(path)
        p = sol.pressure
        jump = float(np.mean([abs(p[a] - p[b]) for a, b in mesh.edges()]))
        summary.append(f"  {tag}: mean edge pressure jump {jump:.3f}")
    return ScenarioResult("test9", summary, artifacts, [])


def run_q2q1q1(out_dir, seed=42, check=False, **kw):
    """Rectangle macro-element: the tensor-quadratic/bilinear combination
    admits the absolute-offset spurious pressure."""
    mesh = gen_quad_macro()
    macro = build_macroelements(mesh)[0]
    ns = local_nullspace(macro, "q2-q1:q1")
    p = np.abs(mesh.vertices[macro.vertex_ids()][:, 1])
    resid = nullspace_residual(ns, p)
    csv = os.path.join(out_dir, "q2q1q1_spectrum.csv")
    write_csv(csv, ["index", "singular_value"],
              [[i, s] for i, s in enumerate(ns.singular_values)])
    summary = [f"2x2 rectangle macro, q2-q1:q1, seed={seed}",
               f"  local nullspace dim (mod constants) = {ns.dim}",
               f"  counterexample pressure residual = {resid:.2e}"]
    checks = []
    if check:
        cfg = load_thresholds()
        dmin = _th(cfg, "q2q1q1", "min_nullspace_dim")
        rmax = _th(cfg, "q2q1q1", "max_residual")
        checks.append(Check(f"dim>={dmin:g}", ns.dim, ns.dim >= dmin))
        checks.append(Check(f"residual<={rmax:g}", resid, resid <= rmax))
    return ScenarioResult("q2q1q1", summary, [csv], checks)


SCENARIOS = {
    "test1": run_test1, "test2": run_test2, "test3": run_test3,
    "test4": run_test4, "test5": run_test5, "test6": run_test6,
    "test7": run_test7, "test8": run_test8, "test9": run_test9,
    "q2q1q1": run_q2q1q1,
}


def run_scenario(name, out_dir=".", **kw):
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from "
                       + ", ".join(sorted(SCENARIOS)))
    os.makedirs(out_dir, exist_ok=True)
    return SCENARIOS[name](out_dir=out_dir, **kw)
