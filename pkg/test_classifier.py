"""
测试脚本 - 分类网络前向、损失、梯度、训练、分割与检测指标
"""

import math

import numpy as np
import pytest

from config import NumericException, ShapeMismatchException, ValidationException
from tactile_phantom import SampleLabel, is_bone_like, transition_labels
from tactile_classifier import (BoneClassifier, NetworkArch, TrainConfig, conv_features, detection_metrics,
                                derive_transitions, forward, forward_batch, gradients, init_params, loss,
                                loss_with_flag, segment, summarize_detection, train)

TINY = NetworkArch(conv_kernel=3, conv_channels=(2,), gru_hidden=(2,))


def _sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def _reference_forward(x, params):
    """逐元素循环实现的同一网络，作为独立参照"""
    w, b = params["conv0.weight"], params["conv0.bias"]
    T = len(x)
    feats = np.zeros((T, w.shape[2]))
    for t in range(T):
        for o in range(w.shape[2]):
            acc = b[o]
            for j in range(w.shape[0]):
                src = t + j - 1
                if 0 <= src < T:
                    acc += x[src] * w[j, 0, o]
            feats[t, o] = max(acc, 0.0)
    wx, wh = params["gru0.weight_x"], params["gru0.weight_h"]
    bx, bh = params["gru0.bias_x"], params["gru0.bias_h"]
    H = wh.shape[0]
    h = np.zeros(H)
    out = np.zeros((T, 4))
    for t in range(T):
        new_h = np.zeros(H)
        for u in range(H):
            ax = [sum(feats[t, i] * wx[i, g * H + u] for i in range(feats.shape[1])) + bx[g * H + u]
                  for g in range(3)]
            ah = [sum(h[i] * wh[i, g * H + u] for i in range(H)) + bh[g * H + u] for g in range(3)]
            r = _sigmoid(ax[0] + ah[0])
            z = _sigmoid(ax[1] + ah[1])
            n = math.tanh(ax[2] + r * ah[2])
            new_h[u] = (1.0 - z) * n + z * h[u]
        h = new_h
        logits = h @ params["fc.weight"] + params["fc.bias"]
        e = np.exp(logits - logits.max())
        out[t] = e / e.sum()
    return out


def test_zero_params_uniform():
    print("🧪 测试零参数输出...")
    params = init_params(NetworkArch(), seed=0).zeros_like()
    probs = forward(np.random.default_rng(0).normal(size=400), params)
    assert probs.shape == (400, 4)
    assert np.allclose(probs, 0.25)
    print("✅ 每帧均为 (0.25, 0.25, 0.25, 0.25)")


def test_forward_rows_sum_to_one():
    params = init_params(NetworkArch(), seed=1)
    probs = forward_batch(np.random.default_rng(1).normal(size=(3, 400)), params)
    assert probs.shape == (3, 400, 4)
    assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-6)


def test_forward_matches_reference():
    print("🧪 测试前向与逐元素参照实现一致...")
    params = init_params(TINY, seed=7)
    x = np.random.default_rng(7).normal(size=15)
    assert np.allclose(forward(x, params), _reference_forward(x, params), atol=1e-12)
    print("✅ 前向结果一致")


def test_loss_examples():
    print("🧪 测试交叉熵...")
    labels = np.array([0, 1, 2, 3, 1])
    onehot = np.eye(4)[labels]
    value, clamped = loss_with_flag(onehot, labels)
    assert value < 1e-9 and not clamped
    assert math.isclose(loss(np.full((5, 4), 0.25), labels), math.log(4.0), rel_tol=1e-12)

    rng = np.random.default_rng(4)
    probs = rng.dirichlet(np.ones(4), size=20)
    lab = rng.integers(0, 4, 20)
    weights = (1.0, 1.0, 4.0, 4.0)
    w = np.asarray(weights)[lab]
    expected = np.sum(w * -np.log(probs[np.arange(20), lab])) / w.sum()
    assert math.isclose(loss(probs, lab, weights), expected, rel_tol=1e-12)

    zero = np.tile([0.0, 1.0, 0.0, 0.0], (2, 1))
    value, clamped = loss_with_flag(zero, np.array([0, 1]))
    assert clamped
    assert math.isclose(value, -math.log(1e-12) / 2.0, rel_tol=1e-12)
    print("✅ 交叉熵测试通过")


def _numeric_gradient(params, x, labels, weights, eps=1e-5):
    base = params.to_vector()
    grad = np.zeros_like(base)
    for i in range(base.size):
        plus, minus = base.copy(), base.copy()
        plus[i] += eps
        minus[i] -= eps
        lp = loss(forward(x, params.from_vector(plus)), labels, weights)
        lm = loss(forward(x, params.from_vector(minus)), labels, weights)
        grad[i] = (lp - lm) / (2 * eps)
    return grad


@pytest.mark.parametrize("padding", ["zero", "circular"])
def test_gradient_check(padding):
    """解析梯度与中心差分逐元素比较"""
    print(f"🧪 测试梯度（{padding} 填充）...")
    arch = NetworkArch(conv_kernel=3, conv_channels=(2,), gru_hidden=(2,), padding=padding)
    params = init_params(arch, seed=3)
    rng = np.random.default_rng(3)
    x = rng.normal(size=12)
    labels = rng.integers(0, 4, 12)
    weights = (1.0, 1.0, 4.0, 4.0)
    analytic = gradients(params, x, labels, weights).to_vector()
    numeric = _numeric_gradient(params, x, labels, weights)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    assert params.num_parameters == 56
    assert rel.max() < 1e-4
    print(f"✅ 最大相对误差 {rel.max():.2e}")


def test_frozen_layers_have_zero_gradient():
    params = init_params(TINY, seed=2)
    x = np.random.default_rng(2).normal(size=10)
    labels = np.random.default_rng(3).integers(0, 4, 10)
    grads = gradients(params, x, labels, frozen=("conv0",))
    assert not grads["conv0.weight"].any() and not grads["conv0.bias"].any()
    assert grads["fc.weight"].any()


def test_saturated_gradient_vanishes():
    params = init_params(TINY, seed=0).zeros_like()
    params.tensors["fc.bias"] = np.array([-50.0, 50.0, -50.0, -50.0])
    labels = np.full(10, SampleLabel.GAP)
    grads = gradients(params, np.zeros(10), labels)
    assert np.linalg.norm(grads.to_vector()) < 1e-8


def test_shape_and_numeric_errors():
    params = init_params(TINY, seed=0)
    params.tensors["fc.weight"] = np.zeros((3, 4))
    with pytest.raises(ShapeMismatchException) as info:
        forward(np.zeros(10), params)
    assert info.value.layer == "fc"

    params = init_params(TINY, seed=0)
    x = np.zeros(10)
    x[4] = np.nan
    with pytest.raises(NumericException) as info:
        gradients(params, x, np.zeros(10, dtype=int))
    assert "fc" in str(info.value)


def _toy_window(length=60):
    s = np.arange(length)
    bone = (s % 20) < 8
    return np.where(bone, 1.0, -1.0), transition_labels(bone)


def test_overfit_single_window():
    print("🧪 测试单样本过拟合...")
    values, labels = _toy_window()
    arch = NetworkArch(conv_kernel=3, conv_channels=(4,), gru_hidden=(8,))
    cfg = TrainConfig(learning_rate=0.02, batch_size=1, epochs=150, seed=0, class_weights=(1.0, 1.0, 1.0, 1.0))
    params = train([(values, labels)], cfg, arch)
    first, last = params.history[0][1], params.history[-1][1]
    assert len(params.history) == cfg.epochs + 1
    assert last < 0.5 * first
    print(f"✅ 损失 {first:.4f} → {last:.4f}")


def test_training_is_deterministic():
    values, labels = _toy_window(40)
    cfg = TrainConfig(learning_rate=0.01, batch_size=2, epochs=3, seed=5)
    data = [(values, labels), (-values, transition_labels(values < 0))]
    a = train(data, cfg, TINY)
    b = train(data, cfg, TINY)
    assert np.array_equal(a.to_vector(), b.to_vector())
    assert a.history == b.history


def test_circular_conv_shift_equivariance():
    params = init_params(NetworkArch(padding="circular"), seed=4)
    x = np.random.default_rng(4).normal(size=64)
    shifted = conv_features(np.roll(x, 5), params)
    assert np.allclose(shifted, np.roll(conv_features(x, params), 5, axis=1), atol=1e-12)


def test_segment_threshold():
    print("🧪 测试分割阈值...")

    def with_bone(p):
        p = np.asarray(p, dtype=float)
        rest = (1.0 - p) / 3.0
        return np.column_stack([p, rest, rest, rest])

    assert is_bone_like(segment(with_bone(np.full(10, 0.95)))).all()
    assert not is_bone_like(segment(with_bone(np.full(10, 0.9)))).any()
    alternating = segment(with_bone(np.tile([0.95, 0.1], 4)))
    assert alternating.tolist() == [SampleLabel.BONE] + [SampleLabel.EXIT, SampleLabel.ENTRANCE] * 3 + [SampleLabel.EXIT]
    assert np.array_equal(derive_transitions(alternating), alternating)
    print("✅ 0.9 严格阈值")


def test_detection_metrics():
    print("🧪 测试检测指标...")
    bone = np.zeros(100, dtype=bool)
    bone[20:30] = True
    bone[60:70] = True
    gt = transition_labels(bone)
    same = detection_metrics(gt, gt, 0.5)
    assert same['accuracy'] == 100.0 and same['centroid_shift'] == 0.0

    shifted = transition_labels(np.roll(bone, 2))
    m = detection_metrics(shifted, gt, 0.5)
    assert math.isclose(m['centroid_shift'], 1.0)
    assert math.isclose(m['accuracy'], 80.0)

    none = detection_metrics(np.full(100, SampleLabel.GAP), gt, 0.5)
    assert not none['accuracy_defined'] and math.isnan(none['centroid_shift'])
    assert none['missed_sections'] == 2

    # 一个骨段被分成两块时按骨段汇总，不因碎片而放大偏移
    split = bone.copy()
    split[24:26] = False
    m_split = detection_metrics(transition_labels(split), gt, 0.5)
    assert m_split['sections'] == 3
    assert m_split['centroid_shift'] == pytest.approx(0.0)
    assert m_split['accuracy'] == 100.0

    # 只检测到第一段：第二段计为漏检，偏移只对检出的骨段求平均
    first_only = bone.copy()
    first_only[60:70] = False
    first_only[22:32] = True
    first_only[20:22] = False
    m_first = detection_metrics(transition_labels(first_only), gt, 0.5)
    assert m_first['missed_sections'] == 1
    assert math.isclose(m_first['centroid_shift'], 1.0)
    assert math.isclose(m_first['accuracy'], 80.0)

    stats = summarize_detection([same, m, none])
    assert stats['undefined_lines'] == 1
    assert math.isclose(stats['accuracy_mean'], 90.0)
    print("✅ 检测指标测试通过")


def test_classifier_requires_params():
    values, labels = _toy_window(40)
    clf = BoneClassifier(arch=TINY)
    with pytest.raises(ValidationException):
        clf.predict_proba([(values, labels)])
    clf.fit([(values, labels)], TrainConfig(epochs=1, batch_size=1, seed=0))
    preds = clf.segment_windows([(values, labels)])
    assert preds[0].shape == (40,)


def main():
    """主测试函数"""
    print("🚀 开始测试分类网络模块...")
    print("=" * 50)
    test_zero_params_uniform()
    test_forward_rows_sum_to_one()
    test_forward_matches_reference()
    test_loss_examples()
    test_gradient_check("zero")
    test_gradient_check("circular")
    test_frozen_layers_have_zero_gradient()
    test_saturated_gradient_vanishes()
    test_shape_and_numeric_errors()
    test_overfit_single_window()
    test_training_is_deterministic()
    test_circular_conv_shift_equivariance()
    test_segment_threshold()
    test_detection_metrics()
    test_classifier_requires_params()
    print("=" * 50)
    print("🎉 测试完成!")


if __name__ == "__main__":
    main()
