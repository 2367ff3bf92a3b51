"""
测试脚本 - Otsu 阈值、扇形倾角、遮挡检测、目标路径规划与重建
"""

import math

import numpy as np
import pytest

from config import DegenerateInputException, DomainException, InsufficientDataException, ValidationException
from tactile_phantom import RibCageSpec, build_phantom
from tactile_registration import RigidTransform
from tactile_scanplan import ScanPath3D
from tactile_pathtransfer import (FanAdjustParams, PathTransfer, SliceGeometry, SlicePose, SliceSegmentation,
                                  TargetCentroidSet, alignment_angle, between_class_variance, coverage_check,
                                  coverage_fraction, fan_tilt, otsu_threshold, plan_path, reconstruct_target,
                                  transfer_path)


def test_otsu_bimodal():
    print("🧪 测试 Otsu 阈值...")
    hist = np.zeros(256)
    hist[10] = 500
    hist[200] = 300
    assert otsu_threshold(hist) == 11
    hist[60] = 100
    k = otsu_threshold(hist)
    assert 11 <= k <= 200
    with pytest.raises(ValidationException):
        otsu_threshold(np.eye(256)[40] * 1000)
    print(f"✅ 阈值 {k}")


def test_otsu_matches_exhaustive_search():
    rng = np.random.default_rng(8)
    for _ in range(10):
        hist = rng.integers(0, 50, 256) * (rng.random(256) < 0.3)
        hist[rng.integers(0, 128)] += 10
        hist[rng.integers(128, 256)] += 10
        k = otsu_threshold(hist)
        best = max(between_class_variance(hist, j) for j in range(1, 256))
        assert between_class_variance(hist, k) >= best * (1 - 1e-9)


def test_fan_tilt():
    print("🧪 测试扇形倾角...")
    c_h = 20.0 / 0.067
    theta = fan_tilt(FanAdjustParams(10.0, c_h, 0.067))
    assert theta == pytest.approx(math.degrees(math.atan(0.5)), abs=1e-9)
    assert theta == pytest.approx(26.565, abs=1e-3)
    assert fan_tilt(FanAdjustParams(-10.0, c_h, 0.067)) == pytest.approx(-theta)
    assert fan_tilt(FanAdjustParams(0.0, c_h, 0.067)) == 0.0
    with pytest.raises(DomainException):
        fan_tilt(FanAdjustParams(10.0, 0.0, 0.067))
    with pytest.raises(ValidationException):
        FanAdjustParams(10.0, -1.0, 0.067)
    print(f"✅ θ = {theta:.3f}°")


def test_fan_tilt_properties():
    """10⁴ 组随机参数：奇函数、对 L_adj 单调不减、对深度单调不增"""
    print("🧪 测试扇形倾角性质...")
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        l1, l2 = np.sort(rng.uniform(-40.0, 40.0, size=2))
        c_h = float(rng.uniform(1.0, 800.0))
        s_h = float(rng.uniform(0.01, 0.2))
        theta1 = fan_tilt(FanAdjustParams(float(l1), c_h, s_h))
        theta2 = fan_tilt(FanAdjustParams(float(l2), c_h, s_h))
        assert fan_tilt(FanAdjustParams(float(-l1), c_h, s_h)) == -theta1
        assert theta1 <= theta2 + 1e-12
        assert -90.0 < theta1 < 90.0
        deeper = fan_tilt(FanAdjustParams(float(l2), c_h * 1.5, s_h))
        assert abs(deeper) <= abs(theta2) + 1e-12
    print("✅ 扇形倾角性质测试通过")


def test_fan_motion_returns_beam_to_centroid():
    phantom = build_phantom(RibCageSpec(undulation_amplitude=0.0))
    transfer = PathTransfer(phantom)
    pose = SlicePose(np.array([40.0, 20.0, 0.0]), [0.0, 1.0], 0.0, 3)
    c_h = 35.0 / transfer.geometry.pixel_size
    for side in (1, -1):
        tilted = transfer.fan_motion(pose, side, c_h)
        assert tilted.index == 3
        assert np.sign(tilted.tilt_deg) == side
        back = tilted.contact[:2] - 35.0 * math.tan(math.radians(tilted.tilt_deg)) * tilted.sweep
        assert np.allclose(back, pose.contact[:2], atol=1e-9)


def _segmentation(index, target_cols, bone_cols, truth=True, n_cols=4):
    mask = np.zeros((3, n_cols), dtype=bool)
    mask[1, list(target_cols)] = True
    bone = np.zeros(n_cols, dtype=bool)
    bone[list(bone_cols)] = True
    return SliceSegmentation(SlicePose(np.zeros(3), [0.0, 1.0], 0.0, index), mask, bone,
                             has_target_truth=truth)


def test_coverage_check():
    print("🧪 测试遮挡检测...")
    segs = [_segmentation(0, [1], []), _segmentation(1, [], [2]), _segmentation(2, [], [1]),
            _segmentation(3, [2], []), _segmentation(4, [1], [0])]
    entries = coverage_check(segs)
    assert [e.trigger for e in entries] == [False, True, True, False, False]
    assert entries[1].side == -1 and entries[2].side == 1

    tie = coverage_check([_segmentation(0, [1], []), _segmentation(1, [], [1]), _segmentation(2, [1], [])])
    assert tie[1].side == 1
    blocked = coverage_check([_segmentation(0, [1], [1]), _segmentation(1, [1], [1])])
    assert all(e.trigger and e.side == 1 for e in blocked)
    assert coverage_check([]) == []

    assert coverage_fraction(segs) == pytest.approx(3 / 5)
    fan = [_segmentation(1, [2], [])]
    assert coverage_fraction(segs, fan) == pytest.approx(4 / 5)
    print("✅ 触发与补扫方向正确")


def test_reconstruct_target_boundary():
    print("🧪 测试目标边界重建...")
    geometry = SliceGeometry(pixel_size=1.0, width=10.0, depth=10.0)
    mask = np.zeros((10, 10), dtype=bool)
    mask[2:7, 2:7] = True
    flat = SliceSegmentation(SlicePose(np.zeros(3), [0.0, 1.0], 0.0, 0), mask, np.zeros(10, dtype=bool))
    pc = reconstruct_target([flat], geometry)
    assert len(pc) == 16
    assert np.allclose(pc.points[:, 1], 0.0)
    assert pc.points[:, 2].min() == pytest.approx(-6.5) and pc.points[:, 2].max() == pytest.approx(-2.5)
    assert pc.points[:, 0].min() == pytest.approx(-1.5) and pc.points[:, 0].max() == pytest.approx(2.5)

    shadow = np.zeros((10, 10), dtype=bool)
    shadow[:, 6] = True
    shadowed = SliceSegmentation(flat.pose, mask, np.zeros(10, dtype=bool), shadow=shadow)
    assert len(reconstruct_target([shadowed], geometry)) == 9

    tilted = SliceSegmentation(SlicePose(np.zeros(3), [0.0, 1.0], 30.0, 1), mask, np.zeros(10, dtype=bool))
    pts = reconstruct_target([tilted], geometry).points
    assert np.allclose(pts[:, 1], pts[:, 2] * math.tan(math.radians(30.0)))

    empty = SliceSegmentation(flat.pose, np.zeros((10, 10), dtype=bool), np.zeros(10, dtype=bool))
    with pytest.raises(InsufficientDataException):
        reconstruct_target([empty], geometry)
    print("✅ 边界点、声影排除与倾斜位姿正确")


def test_plan_path_from_centroids():
    pts = np.column_stack([np.linspace(10.0, -10.0, 9), np.full(9, 5.0), np.full(9, -20.0)])
    path = plan_path(TargetCentroidSet(pts))
    assert np.allclose(path.waypoints[0], [-10.0, 5.0, -20.0])
    assert np.allclose(path.waypoints[-1], [10.0, 5.0, -20.0])
    assert len(path.waypoints) == 21
    assert alignment_angle(path) == pytest.approx(90.0)
    with pytest.raises(InsufficientDataException):
        plan_path(TargetCentroidSet(pts[:1]))
    with pytest.raises(DegenerateInputException):
        plan_path(TargetCentroidSet(np.ones((4, 3))))


def test_transfer_path():
    path = ScanPath3D(np.array([[1.0, 0.0, -3.0], [2.0, 0.0, -3.0]]), path_id="target")
    moved = transfer_path(path, RigidTransform(90.0, 1.0, 0.0))
    assert np.allclose(moved.waypoints, [[1.0, 1.0, -3.0], [1.0, 2.0, -3.0]])
    assert np.allclose(moved.approach_normal, path.approach_normal)
    assert moved.path_id == "target"


def test_render_slice_matches_full_evaluation():
    """只在骨层与目标深度内求值的渲染结果与逐像素全图求值一致"""
    print("🧪 测试切片渲染与全图求值一致...")
    phantom = build_phantom(RibCageSpec.from_config())
    transfer = PathTransfer(phantom)
    g = transfer.geometry
    spec = phantom.spec
    center = phantom.target_center_3d
    for y, tilt in ((center[1], 0.0), (center[1] + 9.0, 0.0), (center[1], 20.0), (center[1] - 12.0, -15.0)):
        pose = SlicePose(np.array([center[0], y, 0.0]), [0.0, 1.0], tilt, 0)
        image = transfer.render_slice(pose, noise=0.0)
        th = math.radians(tilt)
        u = g.col_offsets[None, :]
        d = g.row_depths[:, None]
        qx = pose.contact[0] + u * pose.lateral[0] - d * math.sin(th) * pose.sweep[0]
        qy = pose.contact[1] + u * pose.lateral[1] - d * math.sin(th) * pose.sweep[1]
        z = np.broadcast_to(pose.contact[2] - d * math.cos(th), qx.shape)
        top = phantom.bone_top(qx, qy)
        bone = (z <= top) & (z >= top - spec.bone_thickness) & phantom.bone_mask(qx, qy)
        target = phantom.target_contains(qx, qy, z)
        np.testing.assert_array_equal(image.target_truth, target)
        np.testing.assert_array_equal(image.intensity == 1.0, bone)
    print("✅ 渲染一致性测试通过")


def test_extract_centroids_and_scan_target():
    print("🧪 测试目标质心提取与扇形补扫重建...")
    phantom = build_phantom(RibCageSpec.from_config())
    transfer = PathTransfer(phantom)
    centroids = transfer.extract_centroids()
    center = phantom.target_center_3d
    assert len(centroids) > 50
    assert np.all(np.abs(centroids.points[:, 0] - center[0]) < 0.2)
    assert np.all(np.abs(centroids.points[:, 2] - center[2]) < 0.5)

    path = transfer.plan_path(centroids)
    assert alignment_angle(path) < 1.0

    result = transfer.scan_target(path, fan=True)
    assert result.triggers.any()
    assert len(result.fan_segments) == int(result.triggers.sum())
    without = transfer.scan_target(path, fan=False)
    assert result.coverage_fraction >= without.coverage_fraction
    q = np.sum(((result.points.points - center) / phantom.target_semi_axes) ** 2, axis=1)
    assert np.median(np.abs(np.sqrt(q) - 1.0)) < 0.1
    print(f"✅ {len(centroids)}个质心, 覆盖率 {without.coverage_fraction:.2f} → {result.coverage_fraction:.2f}")


def main():
    """主测试函数"""
    print("🚀 开始测试路径迁移模块...")
    print("=" * 50)
    test_otsu_bimodal()
    test_otsu_matches_exhaustive_search()
    test_fan_tilt()
    test_fan_tilt_properties()
    test_fan_motion_returns_beam_to_centroid()
    test_coverage_check()
    test_reconstruct_target_boundary()
    test_plan_path_from_centroids()
    test_transfer_path()
    test_render_slice_matches_full_evaluation()
    test_extract_centroids_and_scan_target()
    print("=" * 50)
    print("🎉 测试完成!")


if __name__ == "__main__":
    main()
