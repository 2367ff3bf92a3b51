"""
测试脚本 - 验证触觉引导肋间扫描规划流水线的端到端功能
"""

import math

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from config import Config, InsufficientDataException, StageException, ValidationException
from tactile_evaluator import METRICS, PipelineEvaluator, hausdorff, mnnd
from tactile_io import write_report
from utils import ResultCache, config_hash


def test_mnnd_and_hausdorff():
    """距离指标的基本例子"""
    print("🧪 测试点云距离指标...")
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 1.0], [1.0, 1.0], [5.0, 1.0]])
    assert mnnd(a, b) == pytest.approx(1.0)
    assert mnnd(b, a) == pytest.approx((1.0 + 1.0 + math.hypot(4.0, 1.0)) / 3.0)
    assert hausdorff(a, b) == pytest.approx(math.hypot(4.0, 1.0))
    assert hausdorff(a, b) == hausdorff(b, a)
    assert mnnd(a, a) == 0.0 and hausdorff(a, a) == 0.0

    rng = np.random.default_rng(1)
    p, q = rng.normal(size=(30, 3)), rng.normal(size=(40, 3))
    brute = np.linalg.norm(p[:, None] - q[None], axis=2)
    assert mnnd(p, q) == pytest.approx(brute.min(axis=1).mean())
    assert hausdorff(p, q) == pytest.approx(max(brute.min(axis=1).max(), brute.min(axis=0).max()))

    with pytest.raises(InsufficientDataException):
        mnnd(np.zeros((0, 2)), b)
    with pytest.raises(ValidationException):
        mnnd(a, p)
    print("✅ 距离指标测试通过")
    print()


def test_distance_metrics_against_brute_force():
    """100 组随机点云（不超过 500 点）与两两距离矩阵逐一对照"""
    print("🧪 测试距离指标与暴力计算一致...")
    rng = np.random.default_rng(2024)
    for _ in range(100):
        dim = int(rng.choice([2, 3]))
        p = rng.uniform(-50.0, 50.0, size=(int(rng.integers(1, 501)), dim))
        q = rng.uniform(-50.0, 50.0, size=(int(rng.integers(1, 501)), dim))
        if rng.random() < 0.3:
            # 重合点与重复点
            q[: min(len(p), len(q)) // 2] = p[: min(len(p), len(q)) // 2]
        brute = cdist(p, q)
        assert mnnd(p, q) == pytest.approx(brute.min(axis=1).mean(), abs=1e-9)
        assert mnnd(q, p) == pytest.approx(brute.min(axis=0).mean(), abs=1e-9)
        expected = max(brute.min(axis=1).max(), brute.min(axis=0).max())
        assert hausdorff(p, q) == pytest.approx(expected, abs=1e-9)
    print("✅ 暴力对照测试通过")


def test_result_cache():
    print("🧪 测试结果缓存...")
    cache = ResultCache(max_size=2)
    calls = []
    for key in ('network:a', 'network:a', 'template:b', 'template:c'):
        cache.get_or_compute(key, lambda: calls.append(key) or len(calls))
    assert calls == ['network:a', 'template:b', 'template:c']
    assert cache.get('network:a') is None
    stats = cache.get_stats()
    assert stats['size'] == 2 and stats['hit_count'] == 1
    cache.clear()
    assert cache.get('template:c') is None
    assert cache.get_stats()['hit_count'] == 0
    assert config_hash({'a': 1, 'b': [2, 3]}) == config_hash({'b': [2, 3], 'a': 1})
    print("✅ 缓存测试通过")


def test_unknown_scenario():
    with pytest.raises(ValidationException):
        PipelineEvaluator.scenario_config(Config(), 'no_such_scenario')


def test_scenario_overrides():
    base = Config()
    ident = PipelineEvaluator.scenario_config(base, 'identity')
    assert ident.get('eval.max_rotation') == 0.0 and ident.get('signal.noise_sigma') == 0.0
    assert ident.get('eval.label_source') == 'ground_truth'
    assert PipelineEvaluator.scenario_config(base, 'leave_one_out').get('eval.leave_out_line') == 3
    assert PipelineEvaluator.scenario_config(base, 'domain_shift').get('eval.contrast_scale') == 0.5
    assert base.get('eval.label_source') == 'network'


def test_displacement_is_seeded():
    a = PipelineEvaluator.sample_displacement(2024, 3, 15.0, 30.0)
    b = PipelineEvaluator.sample_displacement(2024, 3, 15.0, 30.0)
    c = PipelineEvaluator.sample_displacement(2024, 4, 15.0, 30.0)
    assert a == b and a != c
    assert abs(a.angle_deg) <= 15.0 and abs(a.tx) <= 30.0 and abs(a.ty) <= 30.0


def test_identity_pipeline(tmp_path):
    """零位移、零噪声、真值标签：整条流水线应几乎无误差"""
    print("🧪 测试恒等场景端到端流水线...")
    evaluator = PipelineEvaluator(Config())
    report = evaluator.run_experiment('identity', trials=1, seed=5)
    row = report.rows[0]
    print(f"   配准误差: {row['reg_dist']:.3f} mm / {row['reg_ang']:.3f}°")
    print(f"   路径 MNND: {row['path_mnnd']:.3f} mm, 重建 MNND: {row['recon_mnnd']:.3f} mm")
    assert row['gt_angle_deg'] == 0.0 and row['gt_tx_mm'] == 0.0
    assert row['reg_dist'] < 0.1
    assert row['reg_ang'] < 0.1
    assert row['path_mnnd'] < 0.1
    assert row['coverage'] > 0.0
    assert np.isfinite(row['recon_mnnd'])
    assert report.classification == {}

    summary = report.summary
    for metric in METRICS:
        assert f"{metric}_mean" in summary
    assert summary['trials'] == 1

    files = write_report(report, str(tmp_path))
    with open(files['rows'], encoding='utf-8') as f:
        header = f.readline().strip().split(',')
    assert header[:2] == ['trial', 'scenario']
    with open(files['registration'], encoding='utf-8') as f:
        assert f.readline().strip() == "trial,dist_mm,ang_deg,iters"

    again = evaluator.run_experiment('identity', trials=1, seed=5).rows[0]
    for key in ('reg_dist', 'reg_ang', 'path_mnnd', 'recon_mnnd', 'coverage'):
        assert again[key] == row[key]
    print("✅ 端到端流水线测试通过")
    print()


def test_stage_failure_is_named():
    cfg = Config()
    cfg.set('scan.corners_mm', [[0.0, 0.0]] * 4)
    with pytest.raises(StageException) as info:
        PipelineEvaluator(cfg).run_experiment('identity', trials=1)
    assert info.value.stage == 'scanplan'


def main():
    """主测试函数"""
    import tempfile
    from pathlib import Path

    print("🚀 开始测试触觉引导扫描规划流水线...")
    print("=" * 50)
    test_mnnd_and_hausdorff()
    test_distance_metrics_against_brute_force()
    test_result_cache()
    test_unknown_scenario()
    test_scenario_overrides()
    test_displacement_is_seeded()
    with tempfile.TemporaryDirectory() as tmp:
        test_identity_pipeline(Path(tmp))
    test_stage_failure_is_named()
    print("=" * 50)
    print("🎉 测试完成!")


if __name__ == "__main__":
    main()
