# -*- coding: utf-8 -*-
"""
骨/间隙分类网络模块
一维卷积 → GRU → 全连接的轻量网络，逐帧输出4类概率；
交叉熵训练（解析反向传播），0.9 阈值分割和检测指标
"""

import math
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, softmax

from config import config, NumericException, ShapeMismatchException, ValidationException
from validator import validator
from tactile_phantom import SampleLabel, is_bone_like, transition_labels, bone_runs
from utils import progress_callback

logger = logging.getLogger(__name__)

N_CLASSES = 4
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class NetworkArch:
    """网络结构"""
    conv_kernel: int = 7
    conv_channels: Tuple[int, ...] = (8, 16)
    gru_hidden: Tuple[int, ...] = (32,)
    in_channels: int = 1
    n_classes: int = N_CLASSES
    padding: str = "zero"

    @classmethod
    def from_config(cls, settings: Optional[Dict] = None) -> "NetworkArch":
        s = config.classifier_settings if settings is None else settings
        return cls(int(s.get('conv_kernel', 7)), tuple(int(c) for c in s.get('conv_channels', (8, 16))),
                   tuple(int(h) for h in s.get('gru_hidden', (32,))), padding=s.get('padding', 'zero'))


@dataclass
class NetworkParams:
    """全部网络权重（64位浮点），按名称有序存放"""
    tensors: "OrderedDict[str, np.ndarray]"
    padding: str = "zero"
    history: List[Tuple[int, float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.tensors = OrderedDict((k, np.asarray(v, dtype=np.float64)) for k, v in self.tensors.items())
        if self.padding not in ('zero', 'circular'):
            raise ValidationException(f"不支持的填充方式: {self.padding}", error_code="INVALID_PADDING")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> List[str]:
        return list(self.tensors.keys())

    @property
    def conv_count(self) -> int:
        return sum(1 for k in self.tensors if k.startswith('conv') and k.endswith('.weight'))

    @property
    def gru_count(self) -> int:
        return sum(1 for k in self.tensors if k.startswith('gru') and k.endswith('.weight_x'))

    @property
    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(OrderedDict((k, np.zeros_like(v)) for k, v in self.tensors.items()), self.padding)

    def copy(self) -> "NetworkParams":
        return NetworkParams(OrderedDict((k, v.copy()) for k, v in self.tensors.items()), self.padding,
                             list(self.history))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors.values()])

    def from_vector(self, vec: np.ndarray) -> "NetworkParams":
        out, offset = OrderedDict(), 0
        for k, v in self.tensors.items():
            out[k] = np.asarray(vec[offset:offset + v.size], dtype=np.float64).reshape(v.shape)
            offset += v.size
        return NetworkParams(out, self.padding)

    def validate(self) -> None:
        """检查各层形状相互一致且数值有限"""
        in_ch = 1
        for i in range(self.conv_count):
            layer = f"conv{i}"
            w = self.tensors.get(f"{layer}.weight")
            b = self.tensors.get(f"{layer}.bias")
            if w is None or b is None or w.ndim != 3:
                raise ShapeMismatchException("缺少权重或权重不是三维", layer)
            if w.shape[0] % 2 == 0:
                raise ShapeMismatchException(f"卷积核宽度{w.shape[0]}必须为奇数", layer)
            if w.shape[1] != in_ch:
                raise ShapeMismatchException(f"输入通道{w.shape[1]}与上一层输出{in_ch}不一致", layer)
            if b.shape != (w.shape[2],):
                raise ShapeMismatchException(f"偏置形状{b.shape}与输出通道{w.shape[2]}不一致", layer)
            in_ch = w.shape[2]
        for j in range(self.gru_count):
            layer = f"gru{j}"
            try:
                wx, wh = self.tensors[f"{layer}.weight_x"], self.tensors[f"{layer}.weight_h"]
                bx, bh = self.tensors[f"{layer}.bias_x"], self.tensors[f"{layer}.bias_h"]
            except KeyError:
                raise ShapeMismatchException("缺少GRU参数", layer)
            hidden = wh.shape[0]
            if wx.shape != (in_ch, 3 * hidden):
                raise ShapeMismatchException(f"weight_x形状{wx.shape}应为{(in_ch, 3 * hidden)}", layer)
            if wh.shape != (hidden, 3 * hidden) or bx.shape != (3 * hidden,) or bh.shape != (3 * hidden,):
                raise ShapeMismatchException("隐藏层参数形状不一致", layer)
            in_ch = hidden
        w, b = self.tensors.get('fc.weight'), self.tensors.get('fc.bias')
        if w is None or b is None:
            raise ShapeMismatchException("缺少全连接层参数", "fc")
        if w.shape != (in_ch, N_CLASSES) or b.shape != (N_CLASSES,):
            raise ShapeMismatchException(f"权重形状{w.shape}应为{(in_ch, N_CLASSES)}", "fc")
        for name, value in self.tensors.items():
            if not np.all(np.isfinite(value)):
                raise NumericException(f"参数{name}包含非有限值", error_code="NON_FINITE_PARAMS")


@dataclass
class TrainConfig:
    """训练配置，损失固定为交叉熵"""
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 60
    seed: int = 11
    optimizer: str = "adam"
    momentum: float = 0.9
    class_weights: Tuple[float, ...] = (1.0, 1.0, 4.0, 4.0)
    frozen: Tuple[str, ...] = ()

    @classmethod
    def from_config(cls, settings: Optional[Dict] = None, **overrides) -> "TrainConfig":
        s = dict(config.classifier_settings if settings is None else settings)
        s.update(overrides)
        cfg = cls(float(s.get('learning_rate', 1e-3)), int(s.get('batch_size', 8)), int(s.get('epochs', 60)),
                  int(s.get('seed', 11)), str(s.get('optimizer', 'adam')), float(s.get('momentum', 0.9)),
                  tuple(float(w) for w in s.get('class_weights', (1, 1, 4, 4))), tuple(s.get('frozen', ())))
        validator.validate_train_config(cfg)
        return cfg


def init_params(arch: Optional[NetworkArch] = None, seed: int = 0) -> NetworkParams:
    """按 PyTorch 默认的均匀分布初始化全部参数"""
    arch = arch or NetworkArch.from_config()
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    in_ch = arch.in_channels
    for i, out_ch in enumerate(arch.conv_channels):
        bound = 1.0 / math.sqrt(arch.conv_kernel * in_ch)
        tensors[f"conv{i}.weight"] = rng.uniform(-bound, bound, (arch.conv_kernel, in_ch, out_ch))
        tensors[f"conv{i}.bias"] = rng.uniform(-bound, bound, out_ch)
        in_ch = out_ch
    for j, hidden in enumerate(arch.gru_hidden):
        bound = 1.0 / math.sqrt(hidden)
        tensors[f"gru{j}.weight_x"] = rng.uniform(-bound, bound, (in_ch, 3 * hidden))
        tensors[f"gru{j}.weight_h"] = rng.uniform(-bound, bound, (hidden, 3 * hidden))
        tensors[f"gru{j}.bias_x"] = rng.uniform(-bound, bound, 3 * hidden)
        tensors[f"gru{j}.bias_h"] = rng.uniform(-bound, bound, 3 * hidden)
        in_ch = hidden
    bound = 1.0 / math.sqrt(in_ch)
    tensors["fc.weight"] = rng.uniform(-bound, bound, (in_ch, arch.n_classes))
    tensors["fc.bias"] = rng.uniform(-bound, bound, arch.n_classes)
    params = NetworkParams(tensors, arch.padding)
    params.validate()
    return params


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, padding: str):
    """same 填充的一维卷积，x 形状 (B,T,C)"""
    k = w.shape[0]
    p = (k - 1) // 2
    mode = 'wrap' if padding == 'circular' else 'constant'
    xp = np.pad(x, ((0, 0), (p, k - 1 - p), (0, 0)), mode=mode)
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)  # (B,T,C,k)
    return np.einsum('btck,kco->bto', cols, w) + b, cols


def _conv_backward(dy: np.ndarray, cols: np.ndarray, w: np.ndarray, padding: str):
    k = w.shape[0]
    p = (k - 1) // 2
    B, T, _ = dy.shape
    dw = np.einsum('btck,bto->kco', cols, dy)
    db = dy.sum(axis=(0, 1))
    dxp = np.zeros((B, T + k - 1, w.shape[1]))
    for j in range(k):
        dxp[:, j:j + T, :] += dy @ w[j].T
    dx = dxp[:, p:p + T, :].copy()
    if padding == 'circular':
        right = k - 1 - p
        if p:
            dx[:, T - p:, :] += dxp[:, :p, :]
        if right:
            dx[:, :right, :] += dxp[:, p + T:, :]
    return dx, dw, db


def _gru_forward(x: np.ndarray, wx, wh, bx, bh):
    """PyTorch 门控约定 [r, z, n]，初始隐藏状态为零"""
    B, T, _ = x.shape
    H = wh.shape[0]
    gx = x @ wx + bx
    h = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = {k: np.empty((B, T, H)) for k in ('r', 'z', 'n', 'ghn', 'hprev')}
    for t in range(T):
        gh = h @ wh + bh
        r = expit(gx[:, t, :H] + gh[:, :H])
        z = expit(gx[:, t, H:2 * H] + gh[:, H:2 * H])
        n = np.tanh(gx[:, t, 2 * H:] + r * gh[:, 2 * H:])
        cache['r'][:, t], cache['z'][:, t], cache['n'][:, t] = r, z, n
        cache['ghn'][:, t], cache['hprev'][:, t] = gh[:, 2 * H:], h
        h = (1.0 - z) * n + z * h
        hs[:, t] = h
    return hs, cache


def _gru_backward(dhs: np.ndarray, x: np.ndarray, cache: Dict, wx, wh):
    """随时间反向传播"""
    B, T, H = dhs.shape
    dgx = np.empty((B, T, 3 * H))
    dwh = np.zeros_like(wh)
    dbh = np.zeros(3 * H)
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dhs[:, t] + dh_next
        r, z, n = cache['r'][:, t], cache['z'][:, t], cache['n'][:, t]
        ghn, hprev = cache['ghn'][:, t], cache['hprev'][:, t]
        dn = dh * (1.0 - z)
        dz = dh * (hprev - n)
        dn_pre = dn * (1.0 - n * n)
        dr_pre = dn_pre * ghn * r * (1.0 - r)
        dz_pre = dz * z * (1.0 - z)
        dgx[:, t] = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
        dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
        dwh += hprev.T @ dgh
        dbh += dgh.sum(axis=0)
        dh_next = dh * z + dgh @ wh.T
    dwx = np.einsum('bti,btj->ij', x, dgx)
    dbx = dgx.sum(axis=(0, 1))
    return dgx @ wx.T, dwx, dbx, dwh, dbh


def _as_batch(inputs) -> np.ndarray:
    if hasattr(inputs, 'values') and not isinstance(inputs, np.ndarray):
        inputs = inputs.values
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    return x


def conv_features(inputs, params: NetworkParams) -> np.ndarray:
    """卷积层输出特征 (B,T,C)"""
    x = _as_batch(inputs)[..., None]
    for i in range(params.conv_count):
        pre, _ = _conv_forward(x, params[f"conv{i}.weight"], params[f"conv{i}.bias"], params.padding)
        x = np.maximum(pre, 0.0)
    return x


def _forward_cached(x: np.ndarray, params: NetworkParams):
    caches = []
    h = x[..., None]
    for i in range(params.conv_count):
        pre, cols = _conv_forward(h, params[f"conv{i}.weight"], params[f"conv{i}.bias"], params.padding)
        caches.append(('conv', i, pre, cols))
        h = np.maximum(pre, 0.0)
    for j in range(params.gru_count):
        out, cache = _gru_forward(h, params[f"gru{j}.weight_x"], params[f"gru{j}.weight_h"],
                                  params[f"gru{j}.bias_x"], params[f"gru{j}.bias_h"])
        caches.append(('gru', j, h, cache))
        h = out
    logits = h @ params["fc.weight"] + params["fc.bias"]
    return softmax(logits, axis=-1), h, caches


def forward_batch(inputs, params: NetworkParams) -> np.ndarray:
    """批量前向，返回 (B,T,4) 概率"""
    params.validate()
    probs, _, _ = _forward_cached(_as_batch(inputs), params)
    return probs


def _frame_weights(labels: np.ndarray, class_weights: Optional[Sequence[float]]) -> np.ndarray:
    if class_weights is None:
        return np.ones(labels.shape)
    return np.asarray(class_weights, dtype=float)[labels]


def _check_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
        raise ValidationException("标签必须是有效类别编号 0..3", error_code="INVALID_LABEL")
    return labels


def loss_with_flag(probs, labels, class_weights: Optional[Sequence[float]] = None) -> Tuple[float, bool]:
    """
    交叉熵：逐帧 −log p(label) 的（加权）平均

    Returns:
        (loss, clamped): clamped 表示存在概率被截断到 1e-12 的帧
    """
    probs = np.asarray(probs, dtype=float)
    labels = _check_labels(labels)
    picked = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    clamped = bool(np.any(picked < PROB_FLOOR))
    w = _frame_weights(labels, class_weights)
    value = float(np.sum(w * -np.log(np.maximum(picked, PROB_FLOOR))) / np.sum(w))
    return value, clamped


def _loss_and_grads(params: NetworkParams, x: np.ndarray, labels: np.ndarray,
                    class_weights: Optional[Sequence[float]], frozen: Iterable[str] = ()):
    probs, top, caches = _forward_cached(x, params)
    value, clamped = loss_with_flag(probs, labels, class_weights)
    if clamped:
        logger.debug("交叉熵中存在被截断的零概率")
    w = _frame_weights(labels, class_weights)
    onehot = np.eye(N_CLASSES)[labels]
    dlogits = (probs - onehot) * (w / w.sum())[..., None]

    grads = params.zeros_like()
    g = grads.tensors
    g["fc.weight"] = np.einsum('bth,btc->hc', top, dlogits)
    g["fc.bias"] = dlogits.sum(axis=(0, 1))
    _check_finite("fc", g["fc.weight"], g["fc.bias"])
    dh = dlogits @ params["fc.weight"].T
    for kind, idx, first, second in reversed(caches):
        if kind == 'gru':
            name = f"gru{idx}"
            dh, dwx, dbx, dwh, dbh = _gru_backward(dh, first, second, params[f"{name}.weight_x"],
                                                   params[f"{name}.weight_h"])
            g[f"{name}.weight_x"], g[f"{name}.bias_x"] = dwx, dbx
            g[f"{name}.weight_h"], g[f"{name}.bias_h"] = dwh, dbh
            _check_finite(name, dwx, dwh, dbx, dbh)
        else:
            name = f"conv{idx}"
            dpre = dh * (first > 0)
            dh, dw, db = _conv_backward(dpre, second, params[f"{name}.weight"], params.padding)
            g[f"{name}.weight"], g[f"{name}.bias"] = dw, db
            _check_finite(name, dw, db)
    for key in grads.names():
        if any(key.startswith(prefix) for prefix in frozen):
            g[key] = np.zeros_like(g[key])
    return grads, value, probs


def _check_finite(layer: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericException(f"{layer}层梯度出现NaN", error_code="NAN_GRADIENT")


class _Optimizer:
    """sgd / sgd_momentum / adam 参数更新"""

    def __init__(self, cfg: TrainConfig, params: NetworkParams):
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    def step(self, params: NetworkParams, grads: NetworkParams) -> None:
        self.step_count += 1
        lr = self.cfg.learning_rate
        for k, grad in grads.tensors.items():
            if self.cfg.optimizer == 'sgd':
                params.tensors[k] -= lr * grad
            elif self.cfg.optimizer == 'sgd_momentum':
                self.m[k] = self.cfg.momentum * self.m[k] + grad
                params.tensors[k] -= lr * self.m[k]
            else:
                beta1, beta2, eps = 0.9, 0.999, 1e-8
                self.m[k] = beta1 * self.m[k] + (1 - beta1) * grad
                self.v[k] = beta2 * self.v[k] + (1 - beta2) * grad * grad
                m_hat = self.m[k] / (1 - beta1 ** self.step_count)
                v_hat = self.v[k] / (1 - beta2 ** self.step_count)
                params.tensors[k] -= lr * m_hat / (np.sqrt(v_hat) + eps)


class BoneClassifier:
    """骨/间隙分类器"""

    def __init__(self, params: Optional[NetworkParams] = None, arch: Optional[NetworkArch] = None,
                 threshold: Optional[float] = None):
        settings = config.classifier_settings
        self.arch = arch or NetworkArch.from_config()
        self.params = params
        self.threshold = float(settings.get('bone_threshold', 0.9) if threshold is None else threshold)

    def fit(self, dataset: Sequence, cfg: Optional[TrainConfig] = None) -> NetworkParams:
        """
        训练网络

        Args:
            dataset: SignalWindow 列表，或 (values, labels) 二元组列表
            cfg: 训练配置

        Returns:
            NetworkParams: history 中记录每轮 (epoch, loss, accuracy)

        Raises:
            NumericException: 损失出现 NaN，消息中包含轮次
        """
        cfg = cfg or TrainConfig.from_config()
        if not dataset:
            raise ValidationException("训练集不能为空", error_code="EMPTY_DATASET")
        X, Y = _stack_dataset(dataset)
        params = self.params.copy() if self.params is not None else init_params(self.arch, cfg.seed)
        params.history = []
        params.validate()
        rng = np.random.default_rng(cfg.seed)
        optimizer = _Optimizer(cfg, params)

        loss0, acc0 = self._epoch_stats(params, X, Y, cfg)
        params.history.append((0, loss0, acc0))
        logger.info(f"开始训练: {len(X)}个窗口, {params.num_parameters}个参数, 初始损失 {loss0:.4f}")
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(X))
            for start in range(0, len(X), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                try:
                    grads, _, _ = _loss_and_grads(params, X[idx], Y[idx], cfg.class_weights, cfg.frozen)
                except NumericException as e:
                    raise NumericException(f"第{epoch}轮训练发散: {e.message}", error_code="TRAINING_DIVERGED")
                optimizer.step(params, grads)
            value, acc = self._epoch_stats(params, X, Y, cfg)
            if not math.isfinite(value):
                raise NumericException(f"第{epoch}轮训练发散: 损失为NaN", error_code="TRAINING_DIVERGED")
            params.history.append((epoch, value, acc))
            if epoch % 10 == 0 or epoch == cfg.epochs:
                progress_callback(epoch, cfg.epochs, f"损失 {value:.4f}, 帧准确率 {acc:.1f}%")
        self.params = params
        return params

    @staticmethod
    def _epoch_stats(params: NetworkParams, X: np.ndarray, Y: np.ndarray, cfg: TrainConfig) -> Tuple[float, float]:
        probs, _, _ = _forward_cached(X, params)
        value, _ = loss_with_flag(probs, Y, cfg.class_weights)
        acc = float(np.mean(np.argmax(probs, axis=-1) == Y) * 100.0)
        return value, acc

    def predict_proba(self, windows: Sequence) -> np.ndarray:
        if self.params is None:
            raise ValidationException("分类器尚未训练或加载参数", error_code="MODEL_NOT_READY")
        X, _ = _stack_dataset(windows, need_labels=False)
        return forward_batch(X, self.params)

    def segment_windows(self, windows: Sequence) -> List[np.ndarray]:
        return [segment(p, self.threshold) for p in self.predict_proba(windows)]

    def evaluate(self, windows: Sequence, spacing: float) -> Dict[str, float]:
        """逐窗口检测指标，再按窗口求平均和标准差"""
        preds = self.segment_windows(windows)
        rows = [detection_metrics(p, w.labels, spacing) for p, w in zip(preds, windows)]
        return summarize_detection(rows)


def _stack_dataset(dataset: Sequence, need_labels: bool = True):
    values, labels = [], []
    for item in dataset:
        if isinstance(item, tuple):
            values.append(np.asarray(item[0], dtype=float))
            labels.append(np.asarray(item[1], dtype=np.int64) if len(item) > 1 else None)
        else:
            values.append(item.values)
            labels.append(np.asarray(item.labels, dtype=np.int64))
    lengths = {len(v) for v in values}
    if len(lengths) != 1:
        raise ValidationException("训练窗口长度必须一致", error_code="WINDOW_LENGTH_MISMATCH")
    X = np.stack(values)
    Y = _check_labels(np.stack(labels)) if need_labels else None
    return X, Y


def summarize_detection(rows: Sequence[Dict[str, float]]) -> Dict[str, float]:
    """汇总多条扫描线的检测指标（均值 ± 标准差，跳过未定义的行）"""
    acc = np.array([r['accuracy'] for r in rows if r['accuracy_defined']])
    shift = np.array([r['centroid_shift'] for r in rows if math.isfinite(r['centroid_shift'])])
    return {
        'accuracy_mean': float(acc.mean()) if acc.size else float('nan'),
        'accuracy_sd': float(acc.std()) if acc.size else float('nan'),
        'shift_mean': float(shift.mean()) if shift.size else float('nan'),
        'shift_sd': float(shift.std()) if shift.size else float('nan'),
        'lines': len(rows),
        'undefined_lines': int(sum(1 for r in rows if not r['accuracy_defined'])),
        'missed_sections': int(sum(r.get('missed_sections', 0) for r in rows)),
    }


# 便捷函数
def forward(window, params: NetworkParams) -> np.ndarray:
    """
    单窗口前向

    Returns:
        np.ndarray: (T,4) 概率，每行和为1
    """
    return forward_batch(window, params)[0]


def loss(probs, labels, class_weights: Optional[Sequence[float]] = None) -> float:
    """便捷函数：交叉熵损失"""
    return loss_with_flag(probs, labels, class_weights)[0]


def gradients(params: NetworkParams, window, labels, class_weights: Optional[Sequence[float]] = None,
              frozen: Iterable[str] = ()) -> NetworkParams:
    """
    便捷函数：解析梯度，形状与参数一致

    Args:
        frozen: 冻结层名前缀（如 "conv0"），其梯度置零
    """
    params.validate()
    labels = _check_labels(labels)
    grads, _, _ = _loss_and_grads(params, _as_batch(window), labels.reshape(1, -1), class_weights, tuple(frozen))
    return grads


def train(dataset: Sequence, cfg: Optional[TrainConfig] = None, arch: Optional[NetworkArch] = None,
          initial: Optional[NetworkParams] = None) -> NetworkParams:
    """便捷函数：训练网络"""
    return BoneClassifier(initial, arch).fit(dataset, cfg)


def segment(probs, threshold: float = 0.9) -> np.ndarray:
    """
    p(bone) 严格大于阈值的帧为骨，其余为间隙，再由过渡推导入口/出口
    """
    probs = np.asarray(probs, dtype=float)
    return transition_labels(probs[:, SampleLabel.BONE] > threshold)


def derive_transitions(labels) -> np.ndarray:
    """便捷函数：由骨/间隙标签重新推导入口/出口"""
    return transition_labels(is_bone_like(labels))


def detection_metrics(pred, gt, spacing: float) -> Dict[str, float]:
    """
    检测指标

    Args:
        pred: 预测标签
        gt: 真值标签
        spacing: 帧间距 (mm)

    Returns:
        Dict: accuracy 为预测骨帧落在真值骨区的百分比；
              centroid_shift 按真值骨段计算：每个预测骨帧归入区间距离最近的真值骨段，
              取该段预测骨帧平均位置与真值骨帧平均位置之差的绝对值，再对有预测的骨段求平均 (mm)；
              没有预测骨帧时 accuracy_defined 为 False
    """
    pred_bone = is_bone_like(pred)
    gt_bone = is_bone_like(gt)
    if pred_bone.shape != gt_bone.shape:
        raise ValidationException("预测与真值长度不一致", error_code="LENGTH_MISMATCH")
    sections = bone_runs(gt_bone)
    if not pred_bone.any():
        return {'accuracy': float('nan'), 'centroid_shift': float('nan'), 'accuracy_defined': False,
                'sections': 0, 'missed_sections': len(sections)}
    accuracy = 100.0 * float(np.sum(pred_bone & gt_bone)) / float(np.sum(pred_bone))
    predicted_sections = len(bone_runs(pred_bone))
    if not sections:
        return {'accuracy': accuracy, 'centroid_shift': float('nan'), 'accuracy_defined': True,
                'sections': predicted_sections, 'missed_sections': 0}

    frames = np.nonzero(pred_bone)[0]
    starts = np.array([s for s, _ in sections])
    ends = np.array([e for _, e in sections])
    gap = np.maximum(np.maximum(starts[None, :] - frames[:, None], frames[:, None] - ends[None, :]), 0)
    owner = np.argmin(gap, axis=1)
    shifts = []
    for k, (s, e) in enumerate(sections):
        mine = frames[owner == k]
        if mine.size:
            shifts.append(abs(float(mine.mean()) - (s + e) / 2.0) * spacing)
    return {'accuracy': accuracy, 'centroid_shift': float(np.mean(shifts)), 'accuracy_defined': True,
            'sections': predicted_sections, 'missed_sections': len(sections) - len(shifts)}


def save_params(params: NetworkParams, path: str) -> None:
    """便捷函数：保存为 TNET 文件"""
    from tactile_io import write_network
    write_network(params, path)


def load_params(path: str) -> NetworkParams:
    """便捷函数：读取 TNET 文件"""
    from tactile_io import read_network
    return read_network(path)
