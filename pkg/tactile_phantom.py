# -*- coding: utf-8 -*-
"""
肋骨体模生成模块
生成参数化的合成胸腔体模：表面高度场、刚度场、骨掩膜、嵌入的扫描目标，
以及骨表面模板点云和目标真值点云
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import config, DomainException, InsufficientDataException, ValidationException
from validator import validator

logger = logging.getLogger(__name__)


class PointCloudKind(str, Enum):
    """点云来源"""
    TEMPLATE_US = "template_us"
    TACTILE_SPARSE = "tactile_sparse"
    TACTILE_DENSE = "tactile_dense"
    TARGET_GT = "target_gt"
    TARGET_RECON = "target_recon"


class TissueLabel(str, Enum):
    """体模表面点的标签"""
    BONE = "bone"
    GAP = "gap"


class SampleLabel(IntEnum):
    """扫描线逐帧类别编号，与网络输出通道一致"""
    UNKNOWN = -1
    BONE = 0
    GAP = 1
    ENTRANCE = 2
    EXIT = 3

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def from_text(cls, text: str) -> "SampleLabel":
        return cls[text.strip().upper()]


def is_bone_like(labels) -> np.ndarray:
    """入口帧属于骨段，出口帧属于间隙段"""
    labels = np.asarray(labels)
    return (labels == SampleLabel.BONE) | (labels == SampleLabel.ENTRANCE)


def transition_labels(is_bone) -> np.ndarray:
    """
    由骨/间隙序列推导四类标签

    入口 = 间隙之后的第一个骨帧，出口 = 骨之后的第一个间隙帧
    """
    is_bone = np.asarray(is_bone, dtype=bool)
    labels = np.where(is_bone, SampleLabel.BONE, SampleLabel.GAP).astype(np.int64)
    if is_bone.size > 1:
        prev = is_bone[:-1]
        cur = is_bone[1:]
        labels[1:][cur & ~prev] = SampleLabel.ENTRANCE
        labels[1:][~cur & prev] = SampleLabel.EXIT
    return labels


def bone_runs(is_bone) -> List[Tuple[int, int]]:
    """返回连续骨段的 [start, end] 下标（闭区间）"""
    is_bone = np.asarray(is_bone, dtype=bool).astype(np.int8)
    edges = np.diff(np.concatenate([[0], is_bone, [0]]))
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0] - 1
    return list(zip(starts.tolist(), ends.tolist()))


@dataclass(frozen=True)
class PointCloud:
    """三维点云（单位mm），展平后的点云 z 恒为 0；weights 为可选的逐点质量（降采样后的体素计数）"""
    points: np.ndarray
    kind: PointCloudKind
    frame_id: str = "template"
    warning: Optional[str] = None
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        validator.validate_points(pts, field_name=f"点云[{self.kind}]")
        pts.setflags(write=False)
        object.__setattr__(self, 'points', pts)
        object.__setattr__(self, 'kind', PointCloudKind(self.kind))
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.size != pts.shape[0]:
                raise ValidationException(f"权重数量{w.size}与点数{pts.shape[0]}不一致",
                                          error_code="WEIGHT_LENGTH_MISMATCH")
            if w.size and (not np.all(np.isfinite(w)) or np.any(w <= 0)):
                raise ValidationException("点云权重必须为正的有限值", error_code="INVALID_WEIGHTS")
            w.setflags(write=False)
            object.__setattr__(self, 'weights', w)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def is_flat(self) -> bool:
        return bool(np.all(self.points[:, 2] == 0.0))

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def mass(self) -> np.ndarray:
        """逐点质量，未加权时全为 1"""
        return self.weights if self.weights is not None else np.ones(len(self))

    def with_points(self, points: np.ndarray, frame_id: Optional[str] = None) -> "PointCloud":
        """保持类型和权重不变，替换点坐标"""
        return PointCloud(points, self.kind, frame_id or self.frame_id, weights=self.weights)


@dataclass(frozen=True)
class RibCageSpec:
    """肋骨体模规格，长度单位 mm，刚度单位 N/mm"""
    rib_count: int = 4
    rib_width: float = 12.0
    gap_width: float = 30.0
    rib_length: float = 70.0
    sternum_width: float = 24.0
    skin_thickness: float = 7.0
    bone_thickness: float = 5.0
    bone_stiffness: float = 10.0
    tissue_stiffness: float = 1.0
    rib_axis_angle: float = 90.0
    target_depth: float = 35.0
    target_extent: Tuple[float, float, float] = (16.0, 64.0, 10.0)
    target_center: Tuple[float, float] = (47.0, 21.0)
    undulation_amplitude: float = 1.5
    undulation_wavelength: float = 120.0
    margin: float = 15.0
    grid_step: float = 1.0
    rng_seed: int = 7

    @classmethod
    def from_config(cls, settings: Optional[Dict] = None, **overrides) -> "RibCageSpec":
        """从配置字典创建规格，未知键被忽略"""
        settings = dict(config.phantom_settings if settings is None else settings)
        settings.update(overrides)
        known = {k: v for k, v in settings.items() if k in cls.__dataclass_fields__}
        if 'target_extent' in known:
            known['target_extent'] = tuple(float(v) for v in known['target_extent'])
        if 'target_center' in known:
            known['target_center'] = tuple(float(v) for v in known['target_center'])
        return cls(**known)

    @property
    def pitch(self) -> float:
        """相邻肋骨中心沿胸骨轴的间距"""
        return self.rib_width + self.gap_width

    @property
    def contact_contrast(self) -> float:
        """给定期望力 3N 时骨与间隙之间的压入深度差"""
        force = float(config.get('controller.desired_force', 3.0))
        return force * (1.0 / self.tissue_stiffness - 1.0 / self.bone_stiffness)


@dataclass(frozen=True)
class PhantomModel:
    """合成胸腔体模，构建后不可变"""
    spec: RibCageSpec
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    rib_centers: np.ndarray
    undulation_phase: Tuple[float, float]
    grid_x: np.ndarray = field(repr=False)
    grid_y: np.ndarray = field(repr=False)
    mask_grid: np.ndarray = field(repr=False)

    @property
    def domain(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def has_target(self) -> bool:
        return all(v > 0 for v in self.spec.target_extent)

    @property
    def sternum_half(self) -> float:
        return self.spec.sternum_width / 2.0

    @property
    def sternum_span(self) -> Tuple[float, float]:
        """胸骨沿 y 轴的覆盖范围，没有肋骨时为空区间"""
        if len(self.rib_centers) == 0:
            return (0.0, 0.0)
        half = self.spec.rib_width / 2.0 + self.spec.gap_width / 2.0
        return (float(self.rib_centers[0] - half), float(self.rib_centers[-1] + half))

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    def height(self, x, y) -> np.ndarray:
        """皮肤表面高度场 (mm)，标称表面 z = 0 加低幅长波起伏"""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        spec = self.spec
        if spec.undulation_amplitude == 0:
            return np.zeros(np.broadcast(x, y).shape)
        k = 2.0 * math.pi / spec.undulation_wavelength
        px, py = self.undulation_phase
        return spec.undulation_amplitude * np.sin(k * x + px) * np.cos(k * y + py)

    def surface_gradient(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        """高度场的解析梯度 (∂h/∂x, ∂h/∂y)，无量纲"""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        spec = self.spec
        if spec.undulation_amplitude == 0:
            zeros = np.zeros(np.broadcast(x, y).shape)
            return zeros, zeros.copy()
        k = 2.0 * math.pi / spec.undulation_wavelength
        px, py = self.undulation_phase
        ak = spec.undulation_amplitude * k
        return (ak * np.cos(k * x + px) * np.cos(k * y + py),
                -ak * np.sin(k * x + px) * np.sin(k * y + py))

    def rib_coordinate(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        """
        返回到每根肋骨的局部坐标

        Returns:
            (u, v): u 为离胸骨边缘的横向距离，形状 (...,)；
                    v 为到各肋骨中线沿胸骨轴的偏移，形状 (..., rib_count)
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = np.abs(x) - self.sternum_half
        cot = 1.0 / math.tan(math.radians(self.spec.rib_axis_angle))
        v = y[..., None] - self.rib_centers - (np.maximum(u, 0.0) * cot)[..., None]
        return u, v

    def bone_mask(self, x, y) -> np.ndarray:
        """骨掩膜：肋骨条带（外端圆角）加一条胸骨条带"""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        spec = self.spec
        shape = np.broadcast(x, y).shape
        x, y = np.broadcast_arrays(x, y)
        mask = np.zeros(shape, dtype=bool)
        if spec.rib_count > 0:
            half_w = spec.rib_width / 2.0
            u, v = self.rib_coordinate(x, y)
            u = u[..., None]
            inside = (u >= 0.0) & (u <= spec.rib_length) & (np.abs(v) <= half_w)
            cap_start = spec.rib_length - half_w
            in_cap = u > cap_start
            rounded = (u - cap_start) ** 2 + v ** 2 <= half_w ** 2
            inside &= ~in_cap | rounded
            mask |= np.any(inside, axis=-1)
            if spec.sternum_width > 0:
                lo, hi = self.sternum_span
                mask |= (np.abs(x) <= self.sternum_half) & (y >= lo) & (y <= hi)
        return mask

    def stiffness(self, x, y) -> np.ndarray:
        """刚度场 (N/mm)，骨区为 bone_stiffness，其余为 tissue_stiffness"""
        return np.where(self.bone_mask(x, y), self.spec.bone_stiffness, self.spec.tissue_stiffness)

    def bone_top(self, x, y) -> np.ndarray:
        """骨表面高度：皮肤表面下 skin_thickness"""
        return self.height(x, y) - self.spec.skin_thickness

    @property
    def target_center_3d(self) -> np.ndarray:
        cx, cy = self.spec.target_center
        return np.array([cx, cy, -self.spec.target_depth])

    @property
    def target_semi_axes(self) -> np.ndarray:
        return np.asarray(self.spec.target_extent, dtype=float) / 2.0

    def target_contains(self, x, y, z) -> np.ndarray:
        """判断三维点是否位于椭球目标内部"""
        c = self.target_center_3d
        a = self.target_semi_axes
        q = (((np.asarray(x) - c[0]) / a[0]) ** 2 + ((np.asarray(y) - c[1]) / a[1]) ** 2
             + ((np.asarray(z) - c[2]) / a[2]) ** 2)
        return q <= 1.0

    def gap_midlines(self) -> List[Tuple[float, float]]:
        """相邻肋骨之间的肋间隙中线在胸骨边缘处的 y 坐标及其斜率 dy/d|x|"""
        cot = 1.0 / math.tan(math.radians(self.spec.rib_axis_angle))
        centers = self.rib_centers
        return [(float((centers[i] + centers[i + 1]) / 2.0), cot) for i in range(len(centers) - 1)]


class PhantomBuilder:
    """体模构建器"""

    def __init__(self, spec: Optional[RibCageSpec] = None):
        self.spec = spec or RibCageSpec.from_config()

    def build(self) -> PhantomModel:
        """
        根据规格构建体模

        Returns:
            PhantomModel: 相同规格和种子下结果逐位一致
        """
        spec = self.spec
        validator.validate_rib_cage_spec(spec)

        n = int(spec.rib_count)
        centers = (np.arange(n) - (n - 1) / 2.0) * spec.pitch
        step = spec.grid_step

        half_x = spec.sternum_width / 2.0 + spec.rib_length + spec.margin
        tx, ty = spec.target_center
        half_x = max(half_x, abs(tx) + spec.target_extent[0] / 2.0 + spec.margin, 2 * step)
        cot = abs(1.0 / math.tan(math.radians(spec.rib_axis_angle)))
        half_y = spec.margin + (spec.pitch * (n - 1) / 2.0 + spec.rib_width / 2.0
                                + spec.gap_width / 2.0 + cot * spec.rib_length if n > 0 else 0.0)
        half_y = max(half_y, abs(ty) + spec.target_extent[1] / 2.0 + spec.margin, 2 * step)
        half_x = math.ceil(half_x / step) * step
        half_y = math.ceil(half_y / step) * step

        rng = np.random.default_rng(spec.rng_seed)
        phase = tuple(float(p) for p in rng.uniform(0.0, 2.0 * math.pi, size=2))

        grid_x = np.arange(-half_x, half_x + step / 2.0, step)
        grid_y = np.arange(-half_y, half_y + step / 2.0, step)
        phantom = PhantomModel(
            spec=spec,
            x_min=-half_x, x_max=half_x, y_min=-half_y, y_max=half_y,
            rib_centers=centers,
            undulation_phase=phase,
            grid_x=grid_x, grid_y=grid_y,
            mask_grid=np.zeros((grid_y.size, grid_x.size), dtype=bool),
        )
        gx, gy = np.meshgrid(grid_x, grid_y)
        mask = phantom.bone_mask(gx, gy)
        mask.setflags(write=False)
        object.__setattr__(phantom, 'mask_grid', mask)
        logger.info(f"体模构建完成: {n}根肋骨, 范围 x=±{half_x:.0f}mm y=±{half_y:.0f}mm, "
                    f"骨区占比 {mask.mean():.1%}")
        return phantom

    @staticmethod
    def sample_template_pc(phantom: PhantomModel, density: float) -> PointCloud:
        """
        从骨掩膜上采样模板骨表面点云

        每个骨栅格单元内按 s×s 的子格均匀放置候选点（s = ⌈√density·step⌉，
        单元中心对齐），再无放回随机抽取 round(骨面积 × density) 个点。
        s = 1 时候选点就是骨栅格点本身

        Args:
            phantom: 体模
            density: 采样密度（点/mm²）

        Returns:
            PointCloud: kind=template_us，每个点所在的最近栅格单元骨掩膜为真

        Raises:
            InsufficientDataException: 骨掩膜非空但采样点数少于10
        """
        density = validator.validate_positive(density, 'density')
        step = phantom.spec.grid_step

        rows, cols = np.nonzero(phantom.mask_grid)
        if rows.size == 0:
            logger.warning("骨掩膜为空，返回空模板点云")
            return PointCloud(np.zeros((0, 3)), PointCloudKind.TEMPLATE_US, warning="empty_bone_mask")

        sub = max(int(math.ceil(math.sqrt(density) * step - 1e-9)), 1)
        candidates = rows.size * sub * sub
        wanted = int(round(rows.size * step * step * density))
        count = min(wanted, candidates)
        if count < 10:
            raise InsufficientDataException(f"采样密度不足: {density} 点/mm² 只得到{count}个点",
                                            error_code="INSUFFICIENT_DENSITY")

        offsets = ((np.arange(sub) + 0.5) / sub - 0.5) * step
        ox, oy = np.meshgrid(offsets, offsets)
        x = (phantom.grid_x[cols][:, None] + ox.ravel()[None, :]).ravel()
        y = (phantom.grid_y[rows][:, None] + oy.ravel()[None, :]).ravel()
        if count < candidates:
            rng = np.random.default_rng(phantom.spec.rng_seed)
            keep = np.sort(rng.choice(candidates, size=count, replace=False))
            x, y = x[keep], y[keep]
        logger.debug(f"模板点云: {count}个点 (每个骨栅格 {sub}×{sub} 个候选)")
        z = phantom.bone_top(x, y)
        return PointCloud(np.column_stack([x, y, z]), PointCloudKind.TEMPLATE_US)

    @staticmethod
    def sample_target_gt(phantom: PhantomModel, spacing: float) -> PointCloud:
        """
        在椭球目标解析表面上近似均匀采样真值点云

        Args:
            phantom: 体模
            spacing: 点间距 (mm)

        Returns:
            PointCloud: kind=target_gt
        """
        spacing = validator.validate_positive(spacing, 'spacing')
        if not phantom.has_target:
            raise InsufficientDataException("体模不包含目标", error_code="NO_TARGET")
        a, b, c = phantom.target_semi_axes
        p = 1.6075
        area = 4 * math.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3.0) ** (1.0 / p)
        oversample = max(int(40 * area / spacing ** 2), 1000)
        # 过采样斐波那契格点，再按体素保留首个点
        k = np.arange(oversample) + 0.5
        polar = np.arccos(1.0 - 2.0 * k / oversample)
        azimuth = math.pi * (1.0 + 5.0 ** 0.5) * k
        unit = np.column_stack([np.sin(polar) * np.cos(azimuth),
                                np.sin(polar) * np.sin(azimuth),
                                np.cos(polar)])
        pts = unit * np.array([a, b, c]) + phantom.target_center_3d
        cells = np.floor(pts / (spacing / math.sqrt(3.0))).astype(np.int64)
        _, first = np.unique(cells, axis=0, return_index=True)
        return PointCloud(pts[np.sort(first)], PointCloudKind.TARGET_GT)

    @staticmethod
    def label_point(phantom: PhantomModel, x: float, y: float) -> TissueLabel:
        """
        标注体模表面点

        Raises:
            DomainException: 查询点不在体模范围内
        """
        if not bool(phantom.contains(x, y)):
            raise DomainException(f"查询点({x:.2f}, {y:.2f})超出体模范围", error_code="OUT_OF_DOMAIN")
        return TissueLabel.BONE if bool(phantom.bone_mask(x, y)) else TissueLabel.GAP


# 便捷函数
def build_phantom(spec: Optional[RibCageSpec] = None) -> PhantomModel:
    """便捷函数：构建体模"""
    return PhantomBuilder(spec).build()


def sample_template_pc(phantom: PhantomModel, density: float) -> PointCloud:
    """便捷函数：采样模板点云"""
    return PhantomBuilder.sample_template_pc(phantom, density)


def sample_target_gt(phantom: PhantomModel, spacing: float) -> PointCloud:
    """便捷函数：采样目标真值表面点云"""
    return PhantomBuilder.sample_target_gt(phantom, spacing)


def label_point(phantom: PhantomModel, x: float, y: float) -> TissueLabel:
    """便捷函数：标注单个点"""
    return PhantomBuilder.label_point(phantom, x, y)
