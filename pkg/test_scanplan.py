"""
测试脚本 - 平面拟合、仿射映射、模板映射与胸骨路径推导
"""

import numpy as np
import pytest

from config import DegenerateInputException, InsufficientDataException
from tactile_phantom import RibCageSpec, build_phantom, transition_labels
from tactile_scanplan import (ScanPlanner, ScanPathTemplate, Plane, fit_plane, project_to_plane, solve_affine,
                              map_template, derive_sternum_paths, default_template, plane_residual,
                              resample_polyline)
from tactile_simulator import TactileSimulator, TactileTrace

SQUARE_PX = np.array([[0.0, 0.0], [800.0, 0.0], [800.0, 800.0], [0.0, 800.0]])
SQUARE_MM = np.array([[-90.0, -90.0], [90.0, -90.0], [90.0, 90.0], [-90.0, 90.0]])


def test_fit_plane_horizontal():
    print("🧪 测试水平面拟合...")
    pts = np.column_stack([SQUARE_MM, np.full(4, 5.0)])
    plane = fit_plane(pts)
    assert np.allclose(plane.coefficients, [0.0, 0.0, 1.0, -5.0], atol=1e-12)
    assert plane.residual < 1e-20
    print("✅ 平面 (0,0,1,-5)")


def test_fit_plane_tilted():
    pts = 3.0 * np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, -1.0]])
    plane = fit_plane(pts)
    assert np.allclose(plane.normal, np.ones(3) / np.sqrt(3.0), atol=1e-12)
    assert plane.residual < 1e-9


def test_fit_plane_beats_random_candidates():
    """PCA 平面的残差不大于任意随机单位法向的最优偏移平面"""
    print("🧪 测试平面拟合最优性...")
    rng = np.random.default_rng(5)
    pts = np.column_stack([SQUARE_MM, rng.normal(0.0, 0.5, 4)])
    plane = fit_plane(pts)
    centroid = pts.mean(axis=0)
    normals = rng.normal(size=(1000, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    candidates = np.sum(((pts - centroid) @ normals.T) ** 2, axis=0)
    assert plane.residual <= candidates.min() + 1e-12
    assert abs(plane_residual(pts, plane) - plane.residual) < 1e-9
    print(f"✅ 残差 {plane.residual:.4f} ≤ 随机候选最小值 {candidates.min():.4f}")


def test_fit_plane_degenerate():
    collinear = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [3.0, 3.0, 3.0]])
    with pytest.raises(DegenerateInputException):
        fit_plane(collinear)
    with pytest.raises(DegenerateInputException):
        fit_plane(np.ones((4, 3)))


def test_project_to_plane():
    plane = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
    assert np.allclose(project_to_plane(np.array([0.0, 0.0, 10.0]), plane), [0.0, 0.0, 0.0])
    assert np.allclose(project_to_plane(np.array([3.0, 4.0, 0.0]), plane), [3.0, 4.0, 0.0])

    rng = np.random.default_rng(9)
    tilted = Plane(rng.normal(size=3), 2.5)
    p = rng.normal(scale=20.0, size=(50, 3))
    q = project_to_plane(p, tilted)
    assert np.allclose(np.linalg.norm(p - q, axis=1), np.abs(tilted.signed_distance(p)), atol=1e-9)
    assert np.allclose(tilted.signed_distance(q), 0.0, atol=1e-9)


def test_solve_affine():
    print("🧪 测试仿射求解...")
    uv = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    T = solve_affine(uv, np.column_stack([uv, np.zeros(4)]))
    assert np.allclose(T.matrix, [[1, 0, 0], [0, 1, 0], [0, 0, 0]], atol=1e-12)
    assert T.residuals.max() < 1e-12

    shifted = solve_affine(uv, np.column_stack([uv + [4.0, -2.0], np.full(4, 7.0)]))
    assert np.allclose(shifted.apply([[0.5, 0.5]]), [[4.5, -1.5, 7.0]])

    rng = np.random.default_rng(2)
    M = rng.normal(size=(3, 3))
    T = solve_affine(SQUARE_PX, np.column_stack([SQUARE_PX, np.ones(4)]) @ M.T)
    assert np.allclose(T.matrix, M, atol=1e-8)

    with pytest.raises(DegenerateInputException):
        solve_affine([[0, 0], [1, 1], [2, 2], [3, 3]], np.zeros((4, 3)))
    print("✅ 仿射求解测试通过")


def test_map_template_default():
    print("🧪 测试模板映射...")
    phantom = build_phantom(RibCageSpec.from_config())
    planner = ScanPlanner()
    template = default_template(SQUARE_PX, [0.08, 0.16, 0.24, 0.32, 0.68, 0.76, 0.84, 0.92], [0.35, 0.5, 0.65])
    corners3d = np.column_stack([SQUARE_MM, np.zeros(4)])
    plane, T, paths = planner.plan_from_corners(template, corners3d, phantom)
    assert len(paths) == 11
    assert [p.path_id for p in paths][:8] == [f"P{i}" for i in range(8)]
    for path in paths:
        assert not path.truncated
        centred = path.waypoints - path.waypoints.mean(axis=0)
        singular = np.linalg.svd(centred, compute_uv=False)
        assert singular[1] < 1e-9 * max(singular[0], 1.0)
        steps = np.linalg.norm(np.diff(path.waypoints, axis=0), axis=1)
        assert steps.max() <= 1.0 + 1e-9
    assert np.isclose(paths[0].waypoints[0, 0], -90.0 + 0.08 * 180.0)
    print("✅ 8条平行线 + 3条正交线")


def test_map_template_two_point_line():
    phantom = build_phantom(RibCageSpec.from_config())
    uv = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    template = ScanPathTemplate(uv * 100.0, [np.array([[0.0, 10.0], [1.0, 10.0]])], ["L0"])
    T = solve_affine(template.corner_pixels, np.column_stack([uv * 100.0, np.full(4, 2.0)]), Plane([0, 0, 1], -2.0))
    paths = map_template(template, T, phantom)
    assert len(paths) == 1
    assert np.allclose(paths[0].waypoints[[0, -1]], [[0.0, 10.0, 2.0], [1.0, 10.0, 2.0]])


def test_map_template_truncates():
    phantom = build_phantom(RibCageSpec.from_config())
    template = default_template(SQUARE_PX, [0.5], [0.5])
    corners3d = np.column_stack([SQUARE_MM * 1.5, np.zeros(4)])
    _, _, paths = ScanPlanner().plan_from_corners(template, corners3d, phantom)
    assert all(p.truncated for p in paths)
    for path in paths:
        assert phantom.contains(path.waypoints[:, 0], path.waypoints[:, 1]).all()


def _simulated_parallel_traces():
    phantom = build_phantom(RibCageSpec.from_config())
    planner = ScanPlanner()
    template = default_template(SQUARE_PX)
    plane, _, paths = planner.plan_from_corners(template, np.column_stack([SQUARE_MM, np.zeros(4)]), phantom)
    sim = TactileSimulator(phantom)
    traces = [sim.preprocess(sim.simulate_scan(p, noise_sigma=0.0)) for p in paths if p.path_id.startswith('P')]
    return phantom, planner, plane, traces


def test_derive_sternum_paths():
    """肋骨均匀分布时，推导出的路径沿肋间隙中线"""
    print("🧪 测试胸骨扫描路径推导...")
    phantom, planner, plane, traces = _simulated_parallel_traces()
    paths = planner.derive_sternum_paths(traces, plane, 3)
    assert len(paths) == 3
    expected = sorted(y for y, _ in phantom.gap_midlines())
    spacing = 0.5
    for path, y in zip(sorted(paths, key=lambda p: p.waypoints[:, 1].mean()), expected):
        assert np.all(np.abs(path.waypoints[:, 1] - y) <= spacing + 1e-9)
        assert path.waypoints[:, 0].min() < -phantom.sternum_half
        assert path.waypoints[:, 0].max() > phantom.sternum_half
    print(f"✅ 路径位于 y = {expected}")


def test_derive_sternum_paths_single_rib():
    arc = np.arange(0.0, 100.0, 0.5)
    pos = np.column_stack([np.full(arc.size, 40.0), arc - 50.0, np.zeros(arc.size)])
    bone = (arc > 40) & (arc < 55)
    trace = TactileTrace("P0", arc, pos, pos[:, 2], np.where(bone, 1.0, -1.0), np.full(arc.size, 3.0),
                         transition_labels(bone))
    with pytest.raises(InsufficientDataException):
        derive_sternum_paths([trace])


def test_resample_polyline_endpoints():
    pts = resample_polyline(np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 5.0]]), 1.0)
    assert np.allclose(pts[0], [0.0, 0.0]) and np.allclose(pts[-1], [10.0, 5.0])
    assert len(pts) == 16


def main():
    """主测试函数"""
    print("🚀 开始测试扫描路径规划模块...")
    print("=" * 50)
    test_fit_plane_horizontal()
    test_fit_plane_tilted()
    test_fit_plane_beats_random_candidates()
    test_fit_plane_degenerate()
    test_project_to_plane()
    test_solve_affine()
    test_map_template_default()
    test_map_template_two_point_line()
    test_map_template_truncates()
    test_derive_sternum_paths()
    test_derive_sternum_paths_single_rib()
    test_resample_polyline_endpoints()
    print("=" * 50)
    print("🎉 测试完成!")


if __name__ == "__main__":
    main()
