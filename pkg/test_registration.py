"""
测试脚本 - 平面刚体变换、CPD 刚性配准与配准误差
"""

import math

import numpy as np
import pytest

from config import DegenerateInputException, ValidationException
from tactile_phantom import PointCloud, PointCloudKind
from tactile_pointcloud import downsample
from tactile_registration import (CpdConfig, CpdRegistration, RigidTransform, apply_transform, cpd_rigid,
                                  registration_error)


def _cloud(seed=0, n=60):
    return np.random.default_rng(seed).uniform(-50.0, 50.0, (n, 2))


def test_rigid_transform_algebra():
    print("🧪 测试刚体变换运算...")
    T = RigidTransform(30.0, 4.0, -2.0)
    pts = _cloud(1, 10)
    assert np.allclose(T.invert().apply_xy(T.apply_xy(pts)), pts)
    ident = T @ T.invert()
    assert abs(ident.angle_deg) < 1e-12 and abs(ident.tx) < 1e-12 and abs(ident.ty) < 1e-12
    S = RigidTransform(-75.0, 1.0, 1.0)
    assert np.allclose((T @ S).apply_xy(pts), T.apply_xy(S.apply_xy(pts)))
    assert RigidTransform(350.0).angle_deg == pytest.approx(-10.0)
    assert RigidTransform(-180.0).angle_deg == pytest.approx(180.0)
    assert np.allclose(RigidTransform.from_matrix(T.rotation, T.translation).as_matrix(), T.as_matrix())
    print("✅ 组合、求逆与角度规范化正确")


def test_apply_points_keeps_z():
    pts = np.array([[1.0, 0.0, 5.0], [0.0, 2.0, -3.0]])
    out = RigidTransform(90.0, 1.0, 0.0).apply_points(pts)
    assert np.allclose(out, [[1.0, 1.0, 5.0], [-1.0, 0.0, -3.0]])
    pc = apply_transform(PointCloud(pts, PointCloudKind.TACTILE_DENSE, "world"), RigidTransform(90.0, 1.0, 0.0))
    assert np.allclose(pc.points, out)
    assert pc.kind == PointCloudKind.TACTILE_DENSE


def test_cpd_identity():
    print("🧪 测试恒等配准...")
    pts = _cloud(2)
    result = cpd_rigid(pts, pts, CpdConfig())
    assert abs(result.transform.angle_deg) < 1e-6
    assert np.linalg.norm(result.transform.translation) < 1e-6
    print(f"✅ {result.iterations}次迭代收敛")


@pytest.mark.parametrize("angle,tx,ty", [(10.0, 5.0, 3.0), (-20.0, -8.0, 12.0)])
def test_cpd_recovers_transform(angle, tx, ty):
    print(f"🧪 测试配准恢复 ({angle}°, {tx}, {ty})...")
    target = _cloud(3)
    T_gt = RigidTransform(angle, tx, ty)
    source = T_gt.invert().apply_xy(target)
    result = cpd_rigid(source, target, CpdConfig())
    assert result.converged
    assert abs(result.transform.angle_deg - angle) < 1e-3
    assert abs(result.transform.tx - tx) < 1e-3
    assert abs(result.transform.ty - ty) < 1e-3
    err = registration_error(result.transform, T_gt, target.mean(axis=0))
    assert err['dist'] < 1e-3 and err['ang'] < 1e-3
    print("✅ 变换恢复误差 < 1e-3")


def test_cpd_log_likelihood_non_decreasing():
    target = _cloud(4)
    source = RigidTransform(-12.0, 2.0, -1.0).apply_xy(target) + np.random.default_rng(4).normal(0, 0.3, target.shape)
    result = cpd_rigid(source, target, CpdConfig(max_iterations=50))
    ll = np.asarray(result.log_likelihood)
    assert len(ll) == result.iterations + 1
    assert np.all(np.diff(ll) >= -1e-9)

    floored = cpd_rigid(source, target, CpdConfig(max_iterations=50, sigma2_floor=4.0))
    ll = np.asarray(floored.log_likelihood)
    assert floored.sigma2_final >= 4.0
    assert np.all(np.diff(ll) >= -1e-9)


def _noisy_pair(seed=7):
    target = _cloud(seed, 80)
    rng = np.random.default_rng(seed + 100)
    source = RigidTransform(8.0, -3.0, 4.0).invert().apply_xy(target[:70]) + rng.normal(0.0, 0.5, (70, 2))
    return source, target


def test_cpd_point_order_invariance():
    print("🧪 测试点序无关性...")
    source, target = _noisy_pair()
    base = cpd_rigid(source, target, CpdConfig())
    rng = np.random.default_rng(12)
    shuffled = cpd_rigid(source[rng.permutation(len(source))], target[rng.permutation(len(target))], CpdConfig())
    assert abs(shuffled.transform.angle_deg - base.transform.angle_deg) < 1e-6
    assert np.allclose(shuffled.transform.translation, base.transform.translation, atol=1e-6)
    print("✅ 打乱点序后结果不变")


def test_cpd_rigid_equivariance():
    print("🧪 测试刚体共变性...")
    source, target = _noisy_pair(8)
    base = cpd_rigid(source, target, CpdConfig()).transform
    S = RigidTransform(37.0, 15.0, -22.0)
    moved = cpd_rigid(S.apply_xy(source), S.apply_xy(target), CpdConfig()).transform
    expected = S @ base @ S.invert()
    assert abs(moved.angle_deg - expected.angle_deg) < 1e-6
    assert np.allclose(moved.translation, expected.translation, atol=1e-6)
    print("✅ 两个点云同时做刚体变换，结果按共轭变换")


def test_weighted_cpd_matches_repeated_points():
    print("🧪 测试加权配准...")
    source, target = _noisy_pair(9)
    rng = np.random.default_rng(3)
    ws = rng.integers(1, 4, len(source))
    wt = rng.integers(1, 4, len(target))
    weighted = cpd_rigid(PointCloud(np.column_stack([source, np.zeros(len(source))]), PointCloudKind.TACTILE_DENSE,
                                    weights=ws),
                         PointCloud(np.column_stack([target, np.zeros(len(target))]), PointCloudKind.TEMPLATE_US,
                                    weights=wt), CpdConfig())
    repeated = cpd_rigid(np.repeat(source, ws, axis=0), np.repeat(target, wt, axis=0), CpdConfig())
    assert abs(weighted.transform.angle_deg - repeated.transform.angle_deg) < 1e-6
    assert np.allclose(weighted.transform.translation, repeated.transform.translation, atol=1e-6)
    assert weighted.sigma2_final == pytest.approx(repeated.sigma2_final, rel=1e-6)

    with pytest.raises(ValidationException):
        CpdRegistration(source, target, CpdConfig(), source_weights=np.zeros(len(source)))
    with pytest.raises(ValidationException):
        CpdRegistration(source, target, CpdConfig(sigma2_floor=-1.0))
    print("✅ 整数权重等价于重复点")


def test_voxel_clouds_register_without_lattice_bias():
    print("🧪 测试不同采样相位的体素点云配准...")
    gx, gy = np.meshgrid(np.arange(0.0, 61.0), np.arange(-6.0, 7.0))
    template = PointCloud(np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)]), PointCloudKind.TEMPLATE_US)
    hx, hy = np.meshgrid(np.arange(0.5, 60.0), np.arange(-5.5, 6.0))
    tactile = PointCloud(np.column_stack([hx.ravel(), hy.ravel(), np.zeros(hx.size)]), PointCloudKind.TACTILE_DENSE)
    a, b = downsample(tactile, 3.0), downsample(template, 3.0)
    result = cpd_rigid(a, b, CpdConfig(sigma2_floor=9.0))
    print(f"   平移 ({result.transform.tx:.4f}, {result.transform.ty:.4f}) mm, 角度 {result.transform.angle_deg:.4f}°")
    assert np.linalg.norm(result.transform.translation) < 0.1
    assert abs(result.transform.angle_deg) < 0.05
    print("✅ 加权体素点云无格点偏差")


def test_cpd_input_errors():
    with pytest.raises(ValidationException):
        cpd_rigid(np.zeros((2, 2)), _cloud(5))
    with pytest.raises(DegenerateInputException):
        cpd_rigid(np.ones((5, 2)), _cloud(5))
    tilted = PointCloud(np.column_stack([_cloud(6, 5), np.ones(5)]), PointCloudKind.TACTILE_DENSE)
    with pytest.raises(ValidationException):
        cpd_rigid(tilted, _cloud(6))


def test_registration_error_examples():
    print("🧪 测试配准误差...")
    err = registration_error(RigidTransform(0.0, 3.0, 0.0), RigidTransform.identity())
    assert err['dist'] == pytest.approx(3.0) and err['ang'] == pytest.approx(0.0)
    err = registration_error(RigidTransform(90.0), RigidTransform.identity(), np.array([10.0, 0.0]))
    assert err['dist'] == pytest.approx(math.hypot(10.0, 10.0))
    assert err['ang'] == pytest.approx(90.0)
    err = registration_error(RigidTransform(179.0), RigidTransform(-179.0))
    assert err['ang'] == pytest.approx(2.0)
    print("✅ 配准误差测试通过")


def main():
    """主测试函数"""
    print("🚀 开始测试点云配准模块...")
    print("=" * 50)
    test_rigid_transform_algebra()
    test_apply_points_keeps_z()
    test_cpd_identity()
    test_cpd_recovers_transform(10.0, 5.0, 3.0)
    test_cpd_recovers_transform(-20.0, -8.0, 12.0)
    test_cpd_log_likelihood_non_decreasing()
    test_cpd_point_order_invariance()
    test_cpd_rigid_equivariance()
    test_weighted_cpd_matches_repeated_points()
    test_voxel_clouds_register_without_lattice_bias()
    test_cpd_input_errors()
    test_registration_error_examples()
    print("=" * 50)
    print("🎉 测试完成!")


if __name__ == "__main__":
    main()
