# -*- coding: utf-8 -*-
"""
触觉扫描仿真模块
在准静态接触平衡下仿真阻抗控制压头沿扫描路径的位移，
并把位移轨迹预处理（重采样、高通滤波、定长窗口）为分类器输入
"""

import math
import zlib
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import butter, sosfiltfilt, find_peaks

from config import (config, ContactModelException, InsufficientDataException,
                    ValidationException)
from validator import validator
from tactile_phantom import (PhantomModel, RibCageSpec, build_phantom,
                             is_bone_like, transition_labels, bone_runs)
from tactile_scanplan import ScanPath3D, resample_polyline
from tactile_registration import RigidTransform

logger = logging.getLogger(__name__)


@dataclass
class ControllerParams:
    """阻抗控制器参数"""
    stiffness_axial: float = 1.0       # N/m
    stiffness_lateral: float = 500.0   # N/m
    desired_force: float = 3.0         # N
    speed: float = 4.86                # mm/s
    sample_rate: float = 20.0          # Hz

    @classmethod
    def from_config(cls, settings: Optional[Dict] = None, **overrides) -> "ControllerParams":
        settings = dict(config.controller_settings if settings is None else settings)
        settings.update(overrides)
        params = cls(**{k: v for k, v in settings.items() if k in cls.__dataclass_fields__})
        validator.validate_controller_params(params)
        return params

    @property
    def sample_spacing(self) -> float:
        """跟踪数据相邻样本的弧长间距 (mm)"""
        return self.speed / self.sample_rate

    @property
    def equilibrium_offset(self) -> float:
        """期望位姿相对接触点的轴向偏移 (mm)，F_d / K_m"""
        return self.desired_force / self.stiffness_axial * 1000.0

    def setpoint_offset(self, grad_x, grad_y) -> np.ndarray:
        """
        接触平衡下期望位姿相对接触点的偏移 (mm)

        接触反力近似为 F_d·(−∂h/∂x, −∂h/∂y, 1)，由阻抗弹簧 K·(x_d − x_c) 平衡：
        横向偏移 F_d·∇h / K_lat，轴向偏移 −F_d / K_m

        Returns:
            np.ndarray: (N,3)
        """
        gx = np.atleast_1d(np.asarray(grad_x, dtype=float))
        gy = np.atleast_1d(np.asarray(grad_y, dtype=float))
        lateral = self.desired_force / self.stiffness_lateral * 1000.0
        return np.column_stack([lateral * gx, lateral * gy, np.full(gx.shape, -self.equilibrium_offset)])


@dataclass
class TactileTrace:
    """沿一条扫描线的压头样本序列"""
    path_id: str
    arc_s: np.ndarray
    pos: np.ndarray
    z_raw: np.ndarray
    dz: np.ndarray
    force: np.ndarray
    labels: np.ndarray
    noise_seed: int = 0
    truncated: bool = False
    setpoint: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.arc_s = np.asarray(self.arc_s, dtype=float)
        self.pos = np.asarray(self.pos, dtype=float).reshape(-1, 3)
        self.z_raw = np.asarray(self.z_raw, dtype=float)
        self.dz = np.asarray(self.dz, dtype=float)
        self.force = np.asarray(self.force, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.arc_s.size
        if any(a.shape[0] != n for a in (self.pos, self.z_raw, self.dz, self.force, self.labels)):
            raise ValidationException(f"轨迹{self.path_id}各字段长度不一致", error_code="TRACE_LENGTH_MISMATCH")
        if self.setpoint is not None:
            self.setpoint = np.asarray(self.setpoint, dtype=float).reshape(-1, 3)
            if self.setpoint.shape[0] != n:
                raise ValidationException(f"轨迹{self.path_id}的期望位姿长度不一致", error_code="TRACE_LENGTH_MISMATCH")
        if n > 1 and np.any(np.diff(self.arc_s) <= 0):
            raise ValidationException(f"轨迹{self.path_id}的弧长必须严格递增", error_code="ARC_NOT_INCREASING")
        if not np.all(np.isfinite(self.dz)):
            raise ValidationException(f"轨迹{self.path_id}的dz包含非有限值", error_code="NON_FINITE_DZ")

    def __len__(self) -> int:
        return self.arc_s.size

    @property
    def extent(self) -> float:
        return float(self.arc_s[-1] - self.arc_s[0]) if len(self) else 0.0

    @property
    def is_bone(self) -> np.ndarray:
        return is_bone_like(self.labels)

    def with_labels(self, labels) -> "TactileTrace":
        return replace(self, labels=np.asarray(labels, dtype=np.int64))


@dataclass
class SignalWindow:
    """分类器输入窗口：固定长度的 Δz 序列与逐帧类别"""
    values: np.ndarray
    labels: np.ndarray
    path_id: str
    start_s: float
    end_s: float
    positions: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.values.shape != self.labels.shape:
            raise ValidationException("窗口数值与标签长度不一致", error_code="WINDOW_LENGTH_MISMATCH")
        if self.labels.size and self.labels.max() > 3:
            raise ValidationException("窗口标签必须位于{0..3}", error_code="INVALID_WINDOW_LABEL")

    def __len__(self) -> int:
        return self.values.size

    @property
    def arc(self) -> np.ndarray:
        return np.linspace(self.start_s, self.end_s, len(self))


def _path_stream(seed: int, path_id: str) -> np.random.Generator:
    """每条路径由 (seed, path_id) 派生独立随机流"""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(path_id.encode('utf-8'))])


class TactileSimulator:
    """压头扫描仿真器"""

    def __init__(self, phantom: PhantomModel, ctrl: Optional[ControllerParams] = None,
                 signal_settings: Optional[Dict] = None):
        self.phantom = phantom
        self.ctrl = ctrl or ControllerParams.from_config()
        self.signal = dict(config.signal_settings if signal_settings is None else signal_settings)

    def simulate_scan(self, path: ScanPath3D, noise_sigma: Optional[float] = None, seed: int = 0,
                      pose: Optional[RigidTransform] = None, height_offset: float = 0.0) -> TactileTrace:
        """
        准静态接触平衡仿真：z = height − F_d / k + N(0, σ)

        Args:
            path: 世界坐标下的扫描路径
            noise_sigma: 位移噪声标准差 (mm)
            seed: 噪声种子
            pose: 体模位姿（体模坐标 → 世界坐标）
            height_offset: 体模整体抬高量 (mm)

        Returns:
            TactileTrace: 标签由骨掩膜给出，入口/出口标在过渡处
        """
        sigma = float(self.signal.get('noise_sigma', 0.1) if noise_sigma is None else noise_sigma)
        validator.validate_number_input(sigma, min_val=0, field_name='noise_sigma')
        ds = self.ctrl.sample_spacing
        pts = resample_polyline(path.waypoints, ds)
        if len(pts) < 2:
            raise InsufficientDataException(f"路径{path.path_id}过短，无法仿真", error_code="PATH_TOO_SHORT")
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])

        local = pose.invert().apply_xy(pts[:, :2]) if pose is not None else pts[:, :2]
        inside = self.phantom.contains(local[:, 0], local[:, 1])
        truncated = False
        if not np.all(inside):
            runs = bone_runs(inside)
            if not runs:
                raise InsufficientDataException(f"路径{path.path_id}完全位于体模之外", error_code="PATH_OUTSIDE")
            start, end = max(runs, key=lambda r: r[1] - r[0])
            pts, arc, local = pts[start:end + 1], arc[start:end + 1], local[start:end + 1]
            truncated = True
            logger.warning(f"路径{path.path_id}超出体模范围，截断为{len(pts)}个样本")
        if len(pts) < 2:
            raise InsufficientDataException(f"路径{path.path_id}截断后样本不足", error_code="PATH_TOO_SHORT")

        k = self.phantom.stiffness(local[:, 0], local[:, 1])
        if np.any(k <= 0):
            raise ContactModelException(f"路径{path.path_id}经过零刚度单元", error_code="ZERO_STIFFNESS")
        rng = _path_stream(seed, path.path_id)
        force = np.full(len(pts), self.ctrl.desired_force)
        z = self.phantom.height(local[:, 0], local[:, 1]) + height_offset - force / k
        if sigma > 0:
            z = z + rng.normal(0.0, sigma, size=len(pts))
        labels = transition_labels(self.phantom.bone_mask(local[:, 0], local[:, 1]))
        pos = np.column_stack([pts[:, :2], z])
        gx, gy = self.phantom.surface_gradient(local[:, 0], local[:, 1])
        grad = np.column_stack([gx, gy, np.zeros(len(pts))])
        if pose is not None:
            grad = pose.apply_vector(grad)
        setpoint = pos + self.ctrl.setpoint_offset(grad[:, 0], grad[:, 1])
        logger.debug(f"仿真路径{path.path_id}: {len(pts)}个样本, 骨占比 {is_bone_like(labels).mean():.1%}")
        return TactileTrace(path.path_id, arc, pos, z, z - z.mean(), force, labels, int(seed), truncated, setpoint)

    @staticmethod
    def resample_trace(trace: TactileTrace, spacing: float) -> TactileTrace:
        """
        按弧长均匀重采样，数值线性插值，标签取最近原样本后重新推导过渡

        Raises:
            ValidationException: 间距大于轨迹长度
        """
        spacing = validator.validate_positive(spacing, 'spacing')
        if len(trace) < 2:
            raise InsufficientDataException("重采样至少需要2个样本", error_code="TRACE_TOO_SHORT")
        extent = trace.extent
        if spacing > extent:
            raise ValidationException(f"重采样间距{spacing}mm大于轨迹长度{extent:.3f}mm",
                                      error_code="SPACING_TOO_LARGE")
        count = int(math.floor(extent / spacing + 1e-9)) + 1
        s = trace.arc_s[0] + spacing * np.arange(count)
        interp = lambda v: np.interp(s, trace.arc_s, v)
        pos = np.column_stack([interp(trace.pos[:, k]) for k in range(3)])
        nearest = _nearest_index(trace.arc_s, s)
        labels = transition_labels(trace.is_bone[nearest])
        setpoint = None
        if trace.setpoint is not None:
            setpoint = np.column_stack([interp(trace.setpoint[:, k]) for k in range(3)])
        return replace(trace, arc_s=s, pos=pos, z_raw=interp(trace.z_raw), dz=interp(trace.dz),
                       force=interp(trace.force), labels=labels, setpoint=setpoint)

    @staticmethod
    def highpass(z, sample_spacing: float, cutoff_wavelength: float = 25.0, order: int = 2) -> np.ndarray:
        """
        零相位巴特沃斯高通滤波，去除波长大于 cutoff_wavelength 的分量

        前向-后向滤波使幅频响应平方，截止频率按阶数修正使 −3dB 点落在 cutoff_wavelength 上

        Raises:
            ValidationException: cutoff_wavelength ≤ 2 × sample_spacing
            InsufficientDataException: 信号短于 3 × cutoff_wavelength / sample_spacing
        """
        z = np.asarray(z, dtype=float)
        if cutoff_wavelength <= 2.0 * sample_spacing:
            raise ValidationException("截止波长必须大于两倍采样间距", error_code="CUTOFF_TOO_SHORT")
        min_len = 3.0 * cutoff_wavelength / sample_spacing
        if z.size < min_len:
            raise InsufficientDataException(f"信号长度{z.size}不足{int(math.ceil(min_len))}个样本",
                                            error_code="SIGNAL_TOO_SHORT")
        fs = 1.0 / sample_spacing
        fc = (1.0 / cutoff_wavelength) * (math.sqrt(2.0) - 1.0) ** (1.0 / (2 * order))
        sos = butter(order, fc, btype='highpass', fs=fs, output='sos')
        return sosfiltfilt(sos, z - z.mean())

    def preprocess(self, trace: TactileTrace) -> TactileTrace:
        """重采样 + 高通滤波，结果写入 dz"""
        spacing = float(self.signal.get('resample_spacing', 0.5))
        resampled = self.resample_trace(trace, spacing)
        dz = self.highpass(resampled.z_raw, spacing, float(self.signal.get('cutoff_wavelength', 25.0)),
                           int(self.signal.get('filter_order', 2)))
        return replace(resampled, dz=dz)

    def windows(self, trace: TactileTrace) -> List[SignalWindow]:
        return self.make_windows(trace, int(self.signal.get('window_length', 400)),
                                 int(self.signal.get('min_window_samples', 16)))

    @staticmethod
    def make_windows(trace: TactileTrace, length: int = 400, min_samples: int = 16) -> List[SignalWindow]:
        """
        每条扫描线生成一个定长窗口，按弧长线性插值到 length 并去均值

        Raises:
            InsufficientDataException: 样本数少于 min_samples
        """
        if len(trace) < min_samples:
            raise InsufficientDataException(f"轨迹{trace.path_id}只有{len(trace)}个样本，少于{min_samples}",
                                            error_code="TRACE_TOO_SHORT")
        if len(trace) == length:
            values = trace.dz.copy()
            labels = trace.labels.copy()
            positions = trace.pos.copy()
        else:
            s = np.linspace(trace.arc_s[0], trace.arc_s[-1], length)
            values = np.interp(s, trace.arc_s, trace.dz)
            positions = np.column_stack([np.interp(s, trace.arc_s, trace.pos[:, k]) for k in range(3)])
            labels = transition_labels(trace.is_bone[_nearest_index(trace.arc_s, s)])
        values = values - values.mean()
        return [SignalWindow(values, labels, trace.path_id, float(trace.arc_s[0]), float(trace.arc_s[-1]),
                             positions)]

    def scan_to_windows(self, path: ScanPath3D, seed: int = 0, pose: Optional[RigidTransform] = None,
                        noise_sigma: Optional[float] = None,
                        height_offset: float = 0.0) -> Tuple[TactileTrace, List[SignalWindow]]:
        """仿真 → 预处理 → 窗口"""
        trace = self.preprocess(self.simulate_scan(path, noise_sigma, seed, pose, height_offset))
        return trace, self.windows(trace)


def _nearest_index(arc: np.ndarray, s: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(arc, s), 1, len(arc) - 1)
    left = arc[idx - 1]
    right = arc[idx]
    return np.where(s - left <= right - s, idx - 1, idx)


def estimate_temporal_offset(t_a, sig_a, t_b, sig_b, min_peaks: int = 3) -> float:
    """
    由两路周期信号的波峰和波谷对齐估计时间偏移 (ms)

    极值点用抛物线插值细化到亚采样精度，按最近邻配对后取时间差中位数

    Raises:
        InsufficientDataException: 检测不到足够的周期极值
    """
    def extrema(t, sig):
        t = np.asarray(t, dtype=float)
        sig = np.asarray(sig, dtype=float)
        span = np.ptp(sig)
        if span == 0:
            raise InsufficientDataException("信号为常数，无周期结构", error_code="NON_PERIODIC")
        result = []
        for polarity in (1.0, -1.0):
            y = polarity * sig
            idx, _ = find_peaks(y, prominence=0.3 * span)
            if idx.size < min_peaks:
                raise InsufficientDataException(f"只检测到{idx.size}个极值，信号非周期", error_code="NON_PERIODIC")
            y0, y1, y2 = y[idx - 1], y[idx], y[idx + 1]
            denom = y0 - 2.0 * y1 + y2
            delta = np.where(denom != 0, 0.5 * (y0 - y2) / np.where(denom != 0, denom, 1.0), 0.0)
            dt = np.where(delta >= 0, t[idx + 1] - t[idx], t[idx] - t[idx - 1])
            result.append(t[idx] + delta * dt)
        return result

    peaks_a, troughs_a = extrema(t_a, sig_a)
    peaks_b, troughs_b = extrema(t_b, sig_b)
    diffs = []
    for ext_a, ext_b in ((peaks_a, peaks_b), (troughs_a, troughs_b)):
        nearest = np.argmin(np.abs(ext_b[:, None] - ext_a[None, :]), axis=1)
        diffs.append(ext_b - ext_a[nearest])
    offset = float(np.median(np.concatenate(diffs)))
    logger.info(f"时间偏移估计: {offset:.2f} ms")
    return offset


def sample_periodic_signals(delay_ms: float, period_ms: float = 1000.0, duration_ms: float = 6000.0,
                            interval_ms: float = 10.0, noise: float = 0.0,
                            seed: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """生成一对周期信号，第二路相对第一路延迟 delay_ms"""
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration_ms, interval_ms)
    a = np.sin(2 * math.pi * t / period_ms) + rng.normal(0, noise, t.size)
    b = np.sin(2 * math.pi * (t - delay_ms) / period_ms) + rng.normal(0, noise, t.size)
    return t, a, b


def contrast_scaled_spec(spec: RibCageSpec, scale: float) -> RibCageSpec:
    """调整骨刚度，使骨与间隙的压入深度差变为原来的 scale 倍"""
    if scale == 1.0:
        return spec
    inv_bone = 1.0 / spec.tissue_stiffness - scale * (1.0 / spec.tissue_stiffness - 1.0 / spec.bone_stiffness)
    if inv_bone <= 0:
        raise ValidationException(f"对比度缩放{scale}导致骨刚度非正", error_code="INVALID_CONTRAST_SCALE")
    return replace(spec, bone_stiffness=1.0 / inv_bone)


def generate_training_scans(spec: Optional[RibCageSpec] = None, count: Optional[int] = None,
                            locations: Optional[int] = None, seed: Optional[int] = None,
                            contrast_scale: float = 1.0,
                            ctrl: Optional[ControllerParams] = None) -> List[SignalWindow]:
    """
    生成训练用扫描窗口：体模随机放置在若干位置并抬高不同高度，沿直线扫描

    Args:
        spec: 体模规格
        count: 扫描线数量
        locations: 体模放置位置数量
        seed: 随机种子
        contrast_scale: 骨/间隙对比度缩放（厚皮肤或高刚度体模的域偏移）

    Returns:
        List[SignalWindow]: 每条扫描线一个窗口
    """
    cls_cfg = config.classifier_settings
    count = int(cls_cfg.get('train_lines', 60) if count is None else count)
    locations = max(int(cls_cfg.get('train_locations', 4) if locations is None else locations), 1)
    seed = int(cls_cfg.get('seed', 11) if seed is None else seed)
    orth_fraction = float(cls_cfg.get('orthogonal_fraction', 0.25))
    spec = contrast_scaled_spec(spec or RibCageSpec.from_config(), contrast_scale)
    phantom = build_phantom(spec)
    sim = TactileSimulator(phantom, ctrl)
    rng = np.random.default_rng(seed)

    poses = []
    for _ in range(locations):
        poses.append((RigidTransform(rng.uniform(-10, 10), rng.uniform(-20, 20), rng.uniform(-20, 20)),
                      float(rng.uniform(-5, 5))))

    sh = phantom.sternum_half
    y_lo, y_hi = phantom.y_min + 10.0, phantom.y_max - 10.0
    x_reach = max(sh + spec.rib_length - 8.0, sh + 10.0)
    # 横向扫描线放在肋间隙内，只跨过胸骨
    gap_lines = [mid for mid, _ in phantom.gap_midlines()]
    windows = []
    for i in range(count):
        pose, lift = poses[i % locations]
        if rng.uniform() < orth_fraction:
            if gap_lines:
                y = gap_lines[int(rng.integers(len(gap_lines)))] + rng.uniform(-0.25, 0.25) * spec.gap_width
            else:
                y = rng.uniform(y_lo, y_hi)
            start, stop = np.array([-x_reach, y]), np.array([x_reach, y])
        else:
            x = rng.choice([-1.0, 1.0]) * rng.uniform(sh + 8.0, x_reach)
            start, stop = np.array([x, y_lo]), np.array([x, y_hi])
        angle = math.radians(rng.uniform(-5, 5))
        centre = 0.5 * (start + stop)
        rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        ends = (np.array([start, stop]) - centre) @ rot.T + centre
        if rng.uniform() < 0.5:
            ends = ends[::-1]
        world = pose.apply_xy(ends)
        path = ScanPath3D(np.column_stack([world, np.zeros(2)]), path_id=f"T{i}")
        _, w = sim.scan_to_windows(path, seed=seed + i, pose=pose, height_offset=lift)
        windows.extend(w)
    logger.info(f"生成{len(windows)}条训练扫描窗口（{locations}个位置，对比度缩放{contrast_scale}）")
    return windows


# 便捷函数
def simulate_scan(phantom: PhantomModel, path: ScanPath3D, ctrl: Optional[ControllerParams] = None,
                  noise_sigma: Optional[float] = None, seed: int = 0,
                  pose: Optional[RigidTransform] = None) -> TactileTrace:
    """便捷函数：仿真单条扫描"""
    return TactileSimulator(phantom, ctrl).simulate_scan(path, noise_sigma, seed, pose)


def resample_trace(trace: TactileTrace, spacing: float) -> TactileTrace:
    """便捷函数：重采样轨迹"""
    return TactileSimulator.resample_trace(trace, spacing)


def highpass(z, sample_spacing: float, cutoff_wavelength: float = 25.0, order: int = 2) -> np.ndarray:
    """便捷函数：零相位高通滤波"""
    return TactileSimulator.highpass(z, sample_spacing, cutoff_wavelength, order)


def make_windows(trace: TactileTrace, signal_settings: Optional[Dict] = None) -> List[SignalWindow]:
    """便捷函数：生成定长窗口"""
    settings = signal_settings or config.signal_settings
    return TactileSimulator.make_windows(trace, int(settings.get('window_length', 400)),
                                         int(settings.get('min_window_samples', 16)))
