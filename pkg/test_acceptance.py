"""
验收测试 - 默认配置下 10 次试验的整体精度、确定性与耗时

训练和完整试验较慢，默认不运行：uv run pytest -m slow
"""

import pandas as pd
import pytest

from config import Config
from tactile_evaluator import PipelineEvaluator
from utils import ResultCache, Stopwatch

pytestmark = pytest.mark.slow

TRIALS = 10
SEED = 2024


def _build_evaluator() -> PipelineEvaluator:
    return PipelineEvaluator(Config(), ResultCache())


def _build_default_runs(evaluator: PipelineEvaluator) -> dict:
    """先训练网络，再对同一种子计时运行两次默认场景"""
    base = evaluator.config.copy()
    base.set('eval.seed', SEED)
    evaluator.network(evaluator.scenario_config(base, 'default'))
    runs, elapsed = [], []
    for _ in range(2):
        watch = Stopwatch()
        runs.append(evaluator.run_experiment('default', trials=TRIALS, seed=SEED))
        elapsed.append(watch.elapsed())
    return {'reports': runs, 'elapsed': elapsed}


@pytest.fixture(scope="module")
def evaluator():
    return _build_evaluator()


@pytest.fixture(scope="module")
def default_runs(evaluator):
    return _build_default_runs(evaluator)


def test_default_scenario_is_deterministic_and_fast(default_runs):
    print("🧪 测试默认场景的确定性与耗时...")
    first, second = default_runs['reports']
    pd.testing.assert_frame_equal(first.to_frame().drop(columns='runtime'),
                                  second.to_frame().drop(columns='runtime'), check_exact=True)
    assert first.classification == second.classification
    for seconds in default_runs['elapsed']:
        assert seconds <= 300.0
    print(f"✅ 两次运行一致, 耗时 {default_runs['elapsed'][0]:.1f}s / {default_runs['elapsed'][1]:.1f}s")


def test_bone_classification_on_held_out_lines(default_runs):
    print("🧪 测试留出扫描线的骨/间隙分类...")
    stats = default_runs['reports'][0].classification
    print(f"   准确率 {stats['accuracy_mean']:.2f}%, 质心偏移 {stats['shift_mean']:.2f} mm")
    assert stats['lines'] == 10
    assert stats['accuracy_mean'] >= 85.0
    assert stats['shift_mean'] <= 1.5


def test_bone_classification_under_domain_shift(evaluator):
    print("🧪 测试对比度减半时的分类...")
    base = evaluator.config.copy()
    base.set('eval.seed', SEED)
    _, stats = evaluator.network(evaluator.scenario_config(base, 'domain_shift'))
    print(f"   准确率 {stats['accuracy_mean']:.2f}%, 质心偏移 {stats['shift_mean']:.2f} mm")
    assert stats['accuracy_mean'] >= 75.0
    assert stats['shift_mean'] <= 3.5


def test_registration_accuracy(default_runs):
    print("🧪 测试随机位移下的配准精度...")
    summary = default_runs['reports'][0].summary
    print(f"   平移误差 {summary['reg_dist_mean']:.2f} mm, 旋转误差 {summary['reg_ang_mean']:.3f}°")
    assert summary['trials'] == TRIALS
    assert summary['reg_dist_mean'] <= 3.6
    assert summary['reg_ang_mean'] <= 0.6


def test_leave_one_line_out_degradation(evaluator, default_runs):
    print("🧪 测试去掉一条扫描线后的配准退化...")
    full = default_runs['reports'][0].summary
    reduced = evaluator.run_experiment('leave_one_out', trials=TRIALS, seed=SEED).summary
    print(f"   {full['reg_dist_mean']:.2f} → {reduced['reg_dist_mean']:.2f} mm, "
          f"{full['reg_ang_mean']:.3f} → {reduced['reg_ang_mean']:.3f}°")
    assert reduced['reg_dist_mean'] <= 1.5 * full['reg_dist_mean']
    assert reduced['reg_ang_mean'] <= 1.5 * full['reg_ang_mean']


def test_intercostal_path_transfer(default_runs):
    print("🧪 测试肋间路径迁移精度...")
    summary = default_runs['reports'][0].summary
    print(f"   MNND {summary['path_mnnd_mean']:.2f} mm, HD {summary['path_hd_mean']:.2f} mm")
    assert summary['path_mnnd_undefined'] == 0
    assert summary['path_mnnd_mean'] <= 3.5
    assert summary['path_hd_mean'] <= 4.0


def test_target_reconstruction(default_runs):
    print("🧪 测试扇形补扫后的目标重建精度...")
    summary = default_runs['reports'][0].summary
    print(f"   MNND {summary['recon_mnnd_mean']:.2f} mm, HD {summary['recon_hd_mean']:.2f} mm")
    assert summary['recon_mnnd_undefined'] == 0
    assert summary['recon_mnnd_mean'] <= 0.7
    assert summary['recon_hd_mean'] <= 2.5


def main():
    """主测试函数"""
    print("🚀 开始验收测试（需要训练网络，耗时较长）...")
    print("=" * 50)
    evaluator = _build_evaluator()
    runs = _build_default_runs(evaluator)
    test_default_scenario_is_deterministic_and_fast(runs)
    test_bone_classification_on_held_out_lines(runs)
    test_bone_classification_under_domain_shift(evaluator)
    test_registration_accuracy(runs)
    test_leave_one_line_out_degradation(evaluator, runs)
    test_intercostal_path_transfer(runs)
    test_target_reconstruction(runs)
    print("=" * 50)
    print("🎉 验收测试完成!")


if __name__ == "__main__":
    main()
