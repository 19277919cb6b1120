import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest

from pointercad.kernel.execute import execute_program
from pointercad.kernel.solid import TriangleMesh
from pointercad.metrics import (
    BuildOutcome,
    MetricsReport,
    ModelMetrics,
    chamfer_distance,
    chamfer_from_points,
    count_patches,
    dangling_edge_length,
    evaluate_model,
    extract_primitives,
    f1_from_counts,
    flux_enclosure_error,
    invalidity_ratio,
    is_two_manifold,
    is_valid_build,
    match_count,
    orient2d,
    orient3d,
    primitive_f1,
    sample_surface,
    seg_error,
    self_intersection_ratio,
    triangles_intersect,
)

from oracles import brute_chamfer, brute_match_count, brute_sir, sat_intersect
from progs import WORLD, blended_cube, cube_with_hole, unit_cube_program


def cube_mesh() -> TriangleMesh:
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    t = [
        [0, 1, 3], [0, 3, 2],  # x = 0
        [4, 6, 7], [4, 7, 5],  # x = 1
        [0, 4, 5], [0, 5, 1],  # y = 0
        [2, 3, 7], [2, 7, 6],  # y = 1
        [0, 2, 6], [0, 6, 4],  # z = 0
        [1, 5, 7], [1, 7, 3],  # z = 1
    ]
    return TriangleMesh(v, t)


@pytest.fixture(scope="module")
def cube_solid():
    return execute_program(unit_cube_program()).final


# ---------------------------------------------------------------------------
# Chamfer distance
# ---------------------------------------------------------------------------


def test_cd_matches_brute_force():
    rng = np.random.default_rng(0)
    for n, m in ((300, 300), (257, 411), (1, 50)):
        P, Q = rng.random((n, 3)), rng.random((m, 3))
        assert abs(chamfer_from_points(P, Q) - brute_chamfer(P, Q)) < 1e-12


def test_cd_on_meshes_matches_brute_force(cube_solid):
    holed = execute_program(cube_with_hole(0.5)).final
    cd = chamfer_distance(cube_solid, holed, n=600, seed=4)
    from pointercad.kernel.solid import normalize_to_unit_box

    P = sample_surface(normalize_to_unit_box(cube_solid.mesh), 600, np.random.default_rng(4))
    Q = sample_surface(normalize_to_unit_box(holed.mesh), 600, np.random.default_rng(4))
    assert abs(cd - brute_chamfer(P, Q)) < 1e-12


def test_cd_identity_and_invariance(cube_solid):
    m = cube_solid.mesh
    assert chamfer_distance(m, m) == 0.0
    moved = TriangleMesh(3.0 * m.vertices + [5, -2, 1], m.triangles)
    assert chamfer_distance(m, moved) == pytest.approx(0.0, abs=1e-20)
    assert chamfer_distance(m, moved, normalize=False) > 1.0


def test_samples_lie_on_surface():
    P = sample_surface(cube_mesh(), 2000, np.random.default_rng(1))
    dist = np.minimum(np.abs(P), np.abs(P - 1)).min(axis=1)
    assert dist.max() < 1e-12 and P.min() >= -1e-12 and P.max() <= 1 + 1e-12


def test_sampling_is_area_weighted():
    # a 1x1 square and a 3x1 rectangle, far apart
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [10, 0, 0], [13, 0, 0], [13, 1, 0], [10, 1, 0]], float)
    t = [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]]
    P = sample_surface(TriangleMesh(v, t), 40000, np.random.default_rng(2))
    assert np.mean(P[:, 0] > 5) == pytest.approx(0.75, abs=0.01)


# ---------------------------------------------------------------------------
# validity and watertightness
# ---------------------------------------------------------------------------


def test_cube_is_watertight():
    m = cube_mesh()
    assert m.volume == pytest.approx(1.0)
    assert is_two_manifold(m) and is_valid_build(m)
    assert flux_enclosure_error(m) < 1e-9
    assert dangling_edge_length(m) == 0.0
    assert self_intersection_ratio(m) == 0.0


def test_cube_minus_face():
    m = cube_mesh()
    open_box = TriangleMesh(m.vertices, m.triangles[:-2])
    assert abs(flux_enclosure_error(open_box) - 1e3) < 1e-9
    assert abs(dangling_edge_length(open_box) - 4e3) < 1e-9
    assert not is_two_manifold(open_box) and not is_valid_build(open_box)


def test_flux_scales_after_normalization():
    m = cube_mesh()
    big = TriangleMesh(4.0 * m.vertices, m.triangles[:-2])
    assert abs(flux_enclosure_error(big) - 1e3) < 1e-9
    assert abs(flux_enclosure_error(big, normalize=False) - 16e3) < 1e-9


def test_inverted_and_empty():
    m = cube_mesh()
    flipped = TriangleMesh(m.vertices, m.triangles[:, ::-1])
    assert flipped.volume < 0 and is_two_manifold(flipped)
    assert not is_valid_build(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int)))


def test_invalidity_ratio():
    assert invalidity_ratio([True, False, True, True]) == 0.25
    assert invalidity_ratio([BuildOutcome(True), BuildOutcome(False, "kernel")]) == 0.5
    with pytest.raises(ValueError):
        invalidity_ratio([])


# ---------------------------------------------------------------------------
# exact predicates and self-intersection
# ---------------------------------------------------------------------------


def exact_orient3d(a, b, c, d):
    F = [[Fraction(float(x)) for x in p] for p in (a, b, c, d)]
    m = [[F[i][k] - F[3][k] for k in range(3)] for i in range(3)]
    det = (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )
    return (det > 0) - (det < 0)


def test_orient3d_near_degenerate():
    rng = np.random.default_rng(7)
    for _ in range(300):
        a, b, c = rng.random((3, 3))
        s, t = rng.random(2)
        d = a + s * (b - a) + t * (c - a)  # on the plane up to rounding
        d = d + rng.choice([0.0, 1e-17, -1e-17, 1e-15]) * rng.standard_normal(3)
        assert orient3d(a, b, c, d) == exact_orient3d(a, b, c, d)


def test_orient2d_signs():
    assert orient2d((0, 0), (1, 0), (0, 1)) == 1
    assert orient2d((0, 0), (1, 0), (2, 0)) == 0
    assert orient2d((0, 0), (0, 1), (1, 0)) == -1
    assert orient2d((0.1, 0.1), (0.2, 0.2), (0.3, 0.3)) == orient2d(*(tuple(map(Fraction, p)) for p in ((0.1, 0.1), (0.2, 0.2), (0.3, 0.3))))


def test_triangle_pairs_match_sat_oracle():
    rng = np.random.default_rng(11)
    for k in range(1500):
        pts = rng.integers(0, 3, size=(6, 3)).astype(float)
        if k % 3 == 0:
            pts[:, 2] = 0.0  # coplanar cases
        t1, t2 = pts[:3], pts[3:]
        if np.linalg.norm(np.cross(t1[1] - t1[0], t1[2] - t1[0])) == 0:
            continue
        if np.linalg.norm(np.cross(t2[1] - t2[0], t2[2] - t2[0])) == 0:
            continue
        assert triangles_intersect(t1, t2) == sat_intersect(t1, t2), (t1, t2)


def test_known_pairs():
    t = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    piercing = np.array([[0.2, 0.2, -1], [0.2, 0.2, 1], [2, 2, 0.5]])
    touching = np.array([[1, 0, 0], [2, 0, 1], [2, 0, -1]], float)  # meets at a corner
    apart = t + [0, 0, 1e-12]
    assert triangles_intersect(t, piercing)
    assert triangles_intersect(t, touching)
    assert not triangles_intersect(t, apart)


def test_sir_matches_oracle_on_small_soups():
    rng = np.random.default_rng(3)
    for _ in range(60):
        n_v = int(rng.integers(4, 12))
        V = rng.integers(0, 3, size=(n_v, 3)).astype(float)
        tris = []
        while len(tris) < int(rng.integers(2, 11)):
            t = rng.choice(n_v, 3, replace=False)
            if np.linalg.norm(np.cross(V[t[1]] - V[t[0]], V[t[2]] - V[t[0]])) > 0:
                tris.append(t)
        T = np.array(tris)
        assert self_intersection_ratio(TriangleMesh(V, T)) == brute_sir(V, T)


def test_sir_of_crossing_boxes():
    m = cube_mesh()
    other = TriangleMesh(m.vertices + 0.5, m.triangles)
    soup = TriangleMesh(np.vstack([m.vertices, other.vertices]), np.vstack([m.triangles, other.triangles + 8]))
    assert 0 < self_intersection_ratio(soup) == brute_sir(soup.vertices, soup.triangles)


def test_kernel_outputs_have_no_self_intersections(cube_solid):
    for s in (cube_solid, execute_program(blended_cube(cube_solid, "fillet", 0.2)).final):
        assert self_intersection_ratio(s.mesh) == 0.0


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------


def test_patch_counts(cube_solid):
    assert count_patches(cube_mesh()) == 6
    assert count_patches(cube_solid.mesh) == 6
    holed = execute_program(cube_with_hole(0.5)).final
    assert count_patches(holed.mesh) == 7
    assert seg_error(cube_solid, holed) == 1
    filleted = execute_program(blended_cube(cube_solid, "fillet", 0.2)).final
    # the blend is tangent to both neighbours, so it merges them into one patch
    assert count_patches(filleted.mesh) == 5
    chamfered = execute_program(blended_cube(cube_solid, "chamfer", 0.2)).final
    assert count_patches(chamfered.mesh) == 7


def test_patch_threshold():
    holed = execute_program(cube_with_hole(0.5), segments=8).final
    # 45 degree facets: separate below the threshold, merged above it
    assert count_patches(holed.mesh, 30.0) == 6 + 8
    assert count_patches(holed.mesh, 50.0) == 7


# ---------------------------------------------------------------------------
# primitive F1
# ---------------------------------------------------------------------------


def test_match_count_matches_permutation_oracle():
    rng = np.random.default_rng(9)
    for _ in range(200):
        n, m = int(rng.integers(0, 7)), int(rng.integers(0, 7))
        pred = [rng.integers(0, 3, 2) * 0.01 for _ in range(n)]
        gt = [rng.integers(0, 3, 2) * 0.01 for _ in range(m)]
        tol = float(rng.choice([0.0, 0.01, 0.015]))
        tp = match_count(pred, gt, tol)
        assert tp == brute_match_count(pred, gt, tol)
        expected = 1.0 if n == m == 0 else 2 * tp / (n + m)
        assert f1_from_counts(tp, n, m) == expected


def test_match_count_mixed_lengths():
    assert match_count([np.zeros(2)], [np.zeros(3)], 1.0) == 0


def test_extract_primitives(cube_solid):
    prims = extract_primitives(unit_cube_program())
    assert len(prims["line"]) == 4 and len(prims["extrusion"]) == 1 and not prims["circle"]
    lines = {tuple(np.round(v, 12) + 0.0) for v in prims["line"]}
    # program-normalized: world [0, 1] maps to [0.5, 1]
    assert (0.5, 0.5, 0.5, 1.0, 0.5, 0.5) in lines
    holed = extract_primitives(cube_with_hole(0.5))
    (c,) = holed["circle"]
    assert np.allclose(c, [0.75, 0.75, 0.5, 0.125])
    ch = extract_primitives(blended_cube(cube_solid, "chamfer", 0.2))["chamfer"]
    assert np.allclose(ch[0], [1.0, 1.0, 0.75, 0.1])


def test_primitive_f1():
    gt = unit_cube_program()
    assert all(primitive_f1(gt, gt, k) == 1.0 for k in ("line", "circle", "extrusion", "chamfer", "fillet"))
    holed = cube_with_hole(0.5)
    assert primitive_f1(holed, gt, "circle") == 0.0
    assert primitive_f1(holed, gt, "extrusion") == pytest.approx(2 / 3)
    assert primitive_f1(None, gt, "line") == 0.0
    with pytest.raises(ValueError):
        primitive_f1(gt, gt, "spline")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def test_report_csv(cube_solid):
    holed = execute_program(cube_with_hole(0.5)).final
    rows = [
        evaluate_model("a", cube_solid.mesh, cube_solid.mesh, n=512),
        evaluate_model("b", holed.mesh, cube_solid.mesh, n=512),
        evaluate_model("c", None, cube_solid.mesh),
    ]
    rep = MetricsReport(rows, {"line": 0.5})
    assert rep.ir == pytest.approx(1 / 3)
    assert rows[0].cd == 0.0 and rows[1].seg_e == 1 and not rows[2].built
    table = list(csv.reader(io.StringIO(rep.to_csv())))
    assert table[0] == ["name", "built", "cd", "seg_e", "flux_ee", "dang_el", "sir"]
    assert table[3] == ["c", "0", "", "", "", "", ""]
    footer = {r[0]: r[1] for r in table if r[0].startswith("#")}
    assert footer["#ir"] == "0.333333" and footer["#f1_line"] == "0.5"
    assert rep.cd_median == pytest.approx(rows[1].cd / 2)


def test_invalid_prediction_row():
    m = cube_mesh()
    row = evaluate_model("x", TriangleMesh(m.vertices, m.triangles[:-1]), m)
    assert row == ModelMetrics("x", False, error="invalid mesh")


def test_fillet_volume_sanity(cube_solid):
    s = execute_program(blended_cube(cube_solid, "fillet", 0.2)).final
    assert s.volume == pytest.approx(1 - (1 - math.pi / 4) * 0.04, rel=1e-3)
