# -*- coding: utf-8 -*-
"""
路径迁移与扇形运动模块
在模板空间由目标各切片质心规划肋间扫描路径，经配准结果迁移到当前体模位姿，
沿路径渲染合成超声切片，检测声影遮挡并用扇形运动（倾斜探头）补扫，重建目标表面
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import ndimage

from config import (config, DegenerateInputException, DomainException,
                    InsufficientDataException, ValidationException)
from validator import validator
from tactile_phantom import PhantomModel, PointCloud, PointCloudKind
from tactile_registration import RigidTransform
from tactile_scanplan import ScanPath3D, resample_polyline

logger = logging.getLogger(__name__)

BACKGROUND_LEVEL = 0.1
TARGET_LEVEL = 0.5
BONE_LEVEL = 1.0
BONE_BIN = 191          # 强度 ≥ 0.75 视为骨回声


@dataclass(frozen=True)
class SliceGeometry:
    """线阵探头成像几何"""
    pixel_size: float = 0.067
    width: float = 30.0
    depth: float = 50.0

    @classmethod
    def from_config(cls, settings: Optional[Dict] = None) -> "SliceGeometry":
        s = config.transfer_settings if settings is None else settings
        geom = cls(float(s.get('pixel_size', 0.067)), float(s.get('image_width', 30.0)),
                   float(s.get('image_depth', 50.0)))
        for name in ('pixel_size', 'width', 'depth'):
            validator.validate_positive(getattr(geom, name), name)
        return geom

    @property
    def n_cols(self) -> int:
        return int(round(self.width / self.pixel_size))

    @property
    def n_rows(self) -> int:
        return int(round(self.depth / self.pixel_size))

    @property
    def col_offsets(self) -> np.ndarray:
        return (np.arange(self.n_cols) + 0.5 - self.n_cols / 2.0) * self.pixel_size

    @property
    def row_depths(self) -> np.ndarray:
        return (np.arange(self.n_rows) + 0.5) * self.pixel_size


@dataclass(frozen=True)
class SlicePose:
    """
    切片位姿：探头接触点、扫描方向（水平单位向量）和绕横向轴的倾角

    像素 (行 d, 列 u) 对应 q = c + u·l − d·sinθ·s，z = c_z − d·cosθ；
    θ > 0 时声束朝扫描方向的反方向倾斜
    """
    contact: np.ndarray
    sweep: np.ndarray
    tilt_deg: float = 0.0
    index: int = 0

    def __post_init__(self):
        s = np.asarray(self.sweep, dtype=float)[:2]
        norm = np.linalg.norm(s)
        if norm == 0:
            raise ValidationException("扫描方向不能为零向量", error_code="ZERO_SWEEP")
        object.__setattr__(self, 'sweep', s / norm)
        object.__setattr__(self, 'contact', np.asarray(self.contact, dtype=float).reshape(3))

    @property
    def lateral(self) -> np.ndarray:
        return np.array([-self.sweep[1], self.sweep[0]])

    def pixel_to_world(self, rows, cols, geometry: SliceGeometry) -> np.ndarray:
        """像素下标 → 三维坐标 (N,3)"""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        u = geometry.col_offsets[cols]
        d = geometry.row_depths[rows]
        th = math.radians(self.tilt_deg)
        xy = (self.contact[:2] + u[:, None] * self.lateral - (d * math.sin(th))[:, None] * self.sweep)
        z = self.contact[2] - d * math.cos(th)
        return np.column_stack([xy, z])


@dataclass
class SliceImage:
    """渲染出的合成强度切片"""
    pose: SlicePose
    intensity: np.ndarray
    target_truth: np.ndarray = field(repr=False)
    shadow: np.ndarray = field(repr=False)

    @property
    def has_target_truth(self) -> bool:
        return bool(self.target_truth.any())


@dataclass
class SliceSegmentation:
    """单张切片的目标分割结果"""
    pose: SlicePose
    mask: np.ndarray = field(repr=False)
    bone_columns: np.ndarray = field(repr=False)
    threshold: Optional[int] = None
    shadow: Optional[np.ndarray] = field(default=None, repr=False)
    has_target_truth: bool = False

    @property
    def has_target(self) -> bool:
        return bool(self.mask.any())

    @property
    def target_columns(self) -> np.ndarray:
        return self.mask.any(axis=0)

    @property
    def centroid_row(self) -> Optional[float]:
        """目标质心离图像顶部的像素数"""
        if not self.has_target:
            return None
        rows, _ = np.nonzero(self.mask)
        return float(rows.mean()) + 0.5


@dataclass
class TargetCentroidSet:
    """目标在各切片上的质心"""
    points: np.ndarray
    slice_indices: List[int] = field(default_factory=list)
    poses: List[SlicePose] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class FanAdjustParams:
    """扇形运动参数：L_adj (mm, 与扫描方向一致为正)、c_h (像素)、s_h (mm/像素)"""
    l_adj: float
    c_h: float
    s_h: float = 0.067

    def __post_init__(self):
        for name in ('c_h', 's_h'):
            value = validator.validate_number_input(getattr(self, name), min_val=0, field_name=name)
            object.__setattr__(self, name, value)
        object.__setattr__(self, 'l_adj', validator.validate_number_input(self.l_adj, field_name='l_adj'))


@dataclass(frozen=True)
class CoverageEntry:
    index: int
    trigger: bool
    side: int


@dataclass
class ReconstructionResult:
    """目标重建结果"""
    points: PointCloud
    segments: List[SliceSegmentation] = field(repr=False)
    fan_segments: List[SliceSegmentation] = field(repr=False)
    coverage: List[CoverageEntry] = field(repr=False)
    coverage_fraction: float = 0.0

    @property
    def tilts(self) -> np.ndarray:
        return np.array([seg.pose.tilt_deg for seg in self.fan_segments])

    @property
    def triggers(self) -> np.ndarray:
        return np.array([e.trigger for e in self.coverage], dtype=bool)


def otsu_threshold(histogram) -> int:
    """
    Otsu 阈值

    Args:
        histogram: 各灰度级计数（通常 256 级）

    Returns:
        int: 阈值 k，低类为 [0, k)，高类为 [k, n)，类间方差取最大；并列时取较小的 k

    Raises:
        ValidationException: 非空灰度级少于 2 个
    """
    h = np.asarray(histogram, dtype=float).reshape(-1)
    if h.size < 2 or np.count_nonzero(h) < 2:
        raise ValidationException("直方图没有双峰结构", error_code="NO_BIMODAL_STRUCTURE")
    total = h.sum()
    levels = np.arange(h.size, dtype=float)
    c0 = np.cumsum(h)[:-1]
    c1 = total - c0
    m0 = np.cumsum(h * levels)[:-1]
    m1 = float(np.sum(h * levels)) - m0
    with np.errstate(divide='ignore', invalid='ignore'):
        score = (c0 / total) * (c1 / total) * (m1 / c1 - m0 / c0) ** 2
    score[(c0 == 0) | (c1 == 0)] = -1.0
    return int(np.argmax(score)) + 1


def between_class_variance(histogram, k: int) -> float:
    """阈值 k 的类间方差 w0·w1·(u1 − u0)²"""
    h = np.asarray(histogram, dtype=float)
    levels = np.arange(h.size, dtype=float)
    c0, c1 = h[:k].sum(), h[k:].sum()
    if c0 == 0 or c1 == 0:
        return -1.0
    total = h.sum()
    u0 = float(np.sum(h[:k] * levels[:k]) / c0)
    u1 = float(np.sum(h[k:] * levels[k:]) / c1)
    return (c0 / total) * (c1 / total) * (u1 - u0) ** 2


def fan_tilt(params: FanAdjustParams) -> float:
    """
    扇形运动倾角 θ = sgn(L_adj)·arctan(|L_adj| / (c_h·s_h))，单位度

    Raises:
        DomainException: c_h·s_h = 0
    """
    depth = params.c_h * params.s_h
    if depth == 0:
        raise DomainException("c_h·s_h 为零，倾角无定义", error_code="ZERO_CENTROID_DEPTH")
    return math.copysign(math.degrees(math.atan(abs(params.l_adj) / depth)), params.l_adj) \
        if params.l_adj != 0 else 0.0


def coverage_check(segments: Sequence[SliceSegmentation]) -> List[CoverageEntry]:
    """
    检测需要扇形运动的切片

    ROI 为所有切片中分割到目标的列的并集；某切片的 ROI 列上出现骨回声即触发。
    side 指向最近的未触发切片（沿扫描方向为 +1，距离相等时取 +1，全部触发时为 +1）
    """
    if not segments:
        return []
    roi = np.zeros_like(segments[0].bone_columns, dtype=bool)
    for seg in segments:
        roi |= seg.target_columns
    triggers = np.array([bool(np.any(roi & seg.bone_columns)) for seg in segments])
    free = np.nonzero(~triggers)[0]
    entries = []
    for i, trig in enumerate(triggers):
        side = 1
        if trig and free.size:
            dist = np.abs(free - i)
            nearest = free[dist == dist.min()]
            side = 1 if np.any(nearest > i) else -1
        entries.append(CoverageEntry(i, bool(trig), side))
    logger.debug(f"遮挡检测: {int(triggers.sum())}/{len(segments)}张切片触发扇形运动")
    return entries


def reconstruct_target(segments: Sequence[SliceSegmentation],
                       geometry: Optional[SliceGeometry] = None) -> PointCloud:
    """
    把各切片目标掩膜的边界像素按切片位姿映射回三维

    与声影或图像边缘相邻的边界像素不是真实的目标表面，被排除

    Raises:
        InsufficientDataException: 没有切片覆盖目标
    """
    geometry = geometry or SliceGeometry.from_config()
    parts = []
    for seg in segments:
        if not seg.has_target:
            continue
        mask = seg.mask
        edge = mask & ~ndimage.binary_erosion(mask)
        if seg.shadow is not None and seg.shadow.any():
            edge &= ~ndimage.binary_dilation(seg.shadow)
        edge[0, :] = edge[-1, :] = False
        edge[:, 0] = edge[:, -1] = False
        rows, cols = np.nonzero(edge)
        if rows.size:
            parts.append(seg.pose.pixel_to_world(rows, cols, geometry))
    if not parts:
        raise InsufficientDataException("没有切片覆盖目标，无法重建", error_code="EMPTY_COVERAGE")
    return PointCloud(np.vstack(parts), PointCloudKind.TARGET_RECON, "phantom")


def coverage_fraction(segments: Sequence[SliceSegmentation],
                      fan_segments: Sequence[SliceSegmentation] = ()) -> float:
    """含目标的切片中被（直接或经扇形运动）看到的比例"""
    fan_by_index = {seg.pose.index: seg for seg in fan_segments}
    relevant = [seg for seg in segments if seg.has_target_truth]
    if not relevant:
        return 0.0
    covered = sum(1 for seg in relevant
                  if seg.has_target or (seg.pose.index in fan_by_index
                                        and fan_by_index[seg.pose.index].has_target))
    return covered / len(relevant)


def alignment_angle(path: ScanPath3D, axis=(0.0, 1.0)) -> float:
    """路径方向与胸骨中线的夹角（度，0~90）"""
    d = path.direction[:2]
    a = np.asarray(axis, dtype=float)
    cos = abs(float(d @ a)) / (np.linalg.norm(d) * np.linalg.norm(a))
    return math.degrees(math.acos(min(cos, 1.0)))


class PathTransfer:
    """目标路径规划、迁移与扇形运动重建"""

    def __init__(self, phantom: PhantomModel, settings: Optional[Dict] = None):
        self.phantom = phantom
        self.settings = dict(config.transfer_settings if settings is None else settings)
        self.geometry = SliceGeometry.from_config(self.settings)
        self.l_adj = float(self.settings.get('l_adj', 10.0))
        self.min_contrast = float(self.settings.get('min_contrast', 0.2))

    def render_slice(self, pose: SlicePose, noise: Optional[float] = None, acoustic_shadow: bool = True,
                     rng: Optional[np.random.Generator] = None) -> SliceImage:
        """
        渲染合成强度切片：骨为亮带，目标为中等亮度，背景暗；骨下方声影为零强度

        Args:
            pose: 切片位姿（体模坐标）
            noise: 加性高斯噪声，相对目标与背景对比度
            acoustic_shadow: 是否模拟骨后声影
        """
        noise = float(self.settings.get('slice_noise', 0.0) if noise is None else noise)
        g = self.geometry
        th = math.radians(pose.tilt_deg)
        s, l, c = pose.sweep, pose.lateral, pose.contact
        depth = g.row_depths
        z_rows = c[2] - depth * math.cos(th)
        shape = (depth.size, g.col_offsets.size)

        def sample(rows):
            u = g.col_offsets[None, :]
            d = depth[rows][:, None]
            qx = c[0] + u * l[0] - d * math.sin(th) * s[0]
            qy = c[1] + u * l[1] - d * math.sin(th) * s[1]
            return qx, qy, np.broadcast_to(z_rows[rows][:, None], qx.shape)

        # 只有与骨层或目标深度范围相交的行需要逐像素求值
        phantom = self.phantom
        spec = phantom.spec
        amp = abs(spec.undulation_amplitude)
        bone = np.zeros(shape, dtype=bool)
        rows = np.nonzero((z_rows <= amp - spec.skin_thickness + 1e-9)
                          & (z_rows >= -amp - spec.skin_thickness - spec.bone_thickness - 1e-9))[0]
        if rows.size:
            qx, qy, z = sample(rows)
            top = phantom.bone_top(qx, qy)
            band = (z <= top) & (z >= top - spec.bone_thickness)
            if band.any():
                hit = np.zeros(qx.shape, dtype=bool)
                hit[band] = phantom.bone_mask(qx[band], qy[band])
                bone[rows] = hit
        target = np.zeros(shape, dtype=bool)
        if phantom.has_target:
            cz, az = phantom.target_center_3d[2], phantom.target_semi_axes[2]
            rows = np.nonzero(np.abs(z_rows - cz) <= az + 1e-9)[0]
            if rows.size:
                target[rows] = phantom.target_contains(*sample(rows))
        if acoustic_shadow:
            shadow = np.logical_or.accumulate(bone, axis=0) & ~bone
        else:
            shadow = np.zeros(shape, dtype=bool)

        intensity = np.full(shape, BACKGROUND_LEVEL)
        intensity[target] = TARGET_LEVEL
        intensity[bone] = BONE_LEVEL
        intensity[shadow] = 0.0
        if noise > 0:
            rng = rng or np.random.default_rng(pose.index)
            intensity = intensity + rng.normal(0.0, noise * (TARGET_LEVEL - BACKGROUND_LEVEL), intensity.shape)
        return SliceImage(pose, np.clip(intensity, 0.0, 1.0), target, shadow)

    def segment_slice(self, image: SliceImage) -> SliceSegmentation:
        """
        Otsu 分割目标：只统计介于零强度声影和骨回声之间的像素，保留最大连通域
        """
        bins = np.clip(np.round(image.intensity * 255.0), 0, 255).astype(np.int64)
        bone_columns = np.any(bins >= BONE_BIN, axis=0)
        candidates = (bins > 0) & (bins < BONE_BIN)
        shadow = image.shadow if image.shadow.any() else None
        empty = SliceSegmentation(image.pose, np.zeros(bins.shape, dtype=bool), bone_columns,
                                  None, shadow, image.has_target_truth)
        hist = np.bincount(bins[candidates], minlength=256)
        try:
            k = otsu_threshold(hist)
        except ValidationException:
            return empty
        mask = candidates & (bins >= k)
        rest = candidates & ~mask
        if not mask.any() or not rest.any():
            return empty
        if image.intensity[mask].mean() - image.intensity[rest].mean() < self.min_contrast:
            return empty
        labelled, count = ndimage.label(mask)
        if count > 1:
            sizes = ndimage.sum(mask, labelled, index=np.arange(1, count + 1))
            mask = labelled == (int(np.argmax(sizes)) + 1)
        return SliceSegmentation(image.pose, mask, bone_columns, k, shadow, image.has_target_truth)

    def slice_centroid(self, seg: SliceSegmentation) -> Optional[np.ndarray]:
        if not seg.has_target:
            return None
        rows, cols = np.nonzero(seg.mask)
        return seg.pose.pixel_to_world(rows, cols, self.geometry).mean(axis=0)

    def extract_centroids(self, slice_spacing: Optional[float] = None, sweep_axis: Optional[Sequence[float]] = None,
                          noise: Optional[float] = None, acoustic_shadow: bool = False,
                          seed: int = 0) -> TargetCentroidSet:
        """
        沿目标的水平长轴扫过一组竖直切片，逐片分割并求质心

        Raises:
            InsufficientDataException: 体模没有目标或没有切片包含目标
        """
        phantom = self.phantom
        if not phantom.has_target:
            raise InsufficientDataException("体模不包含目标", error_code="NO_TARGET")
        spacing = validator.validate_positive(self.settings.get('slice_spacing', 1.0)
                                              if slice_spacing is None else slice_spacing, 'slice_spacing')
        semi = phantom.target_semi_axes
        if sweep_axis is None:
            sweep = np.array([1.0, 0.0]) if semi[0] >= semi[1] else np.array([0.0, 1.0])
        else:
            sweep = np.asarray(sweep_axis, dtype=float)[:2]
            sweep = sweep / np.linalg.norm(sweep)
        reach = float(np.abs(semi[:2] @ sweep)) if sweep_axis is None else float(np.linalg.norm(semi[:2]))
        offsets = np.arange(-math.ceil(reach / spacing), math.ceil(reach / spacing) + 1) * spacing
        center = phantom.target_center_3d[:2]
        rng = np.random.default_rng(seed)

        points, indices, poses = [], [], []
        for i, t in enumerate(offsets):
            xy = center + t * sweep
            pose = SlicePose(np.array([xy[0], xy[1], float(phantom.height(xy[0], xy[1]))]), sweep, 0.0, i)
            seg = self.segment_slice(self.render_slice(pose, noise, acoustic_shadow, rng))
            centroid = self.slice_centroid(seg)
            if centroid is None:
                continue
            points.append(centroid)
            indices.append(i)
            poses.append(pose)
        if not points:
            raise InsufficientDataException("没有切片包含目标", error_code="NO_TARGET_SLICES")
        logger.info(f"提取目标质心: {len(points)}/{len(offsets)}张切片包含目标")
        return TargetCentroidSet(np.array(points), indices, poses)

    @staticmethod
    def plan_path(centroids: TargetCentroidSet, step: float = 1.0, path_id: str = "target") -> ScanPath3D:
        """
        对质心做 PCA：第一主轴为路径方向（最大分量取正），
        起止点为质心在主轴上的极值投影，路径经过质心均值，按 step 采样

        Raises:
            InsufficientDataException: 质心少于 2 个
            DegenerateInputException: 质心全部重合
        """
        pts = centroids.points if isinstance(centroids, TargetCentroidSet) else np.asarray(centroids, dtype=float)
        if len(pts) < 2:
            raise InsufficientDataException("规划路径至少需要2个质心", error_code="TOO_FEW_CENTROIDS")
        mean = pts.mean(axis=0)
        centered = pts - mean
        if np.allclose(centered, 0.0):
            raise DegenerateInputException("质心全部重合，无法确定路径方向", error_code="COINCIDENT_CENTROIDS")
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        direction = vt[0]
        if direction[np.argmax(np.abs(direction))] < 0:
            direction = -direction
        proj = centered @ direction
        ends = np.array([mean + proj.min() * direction, mean + proj.max() * direction])
        return ScanPath3D(resample_polyline(ends, step), path_id=path_id)

    @staticmethod
    def transfer_path(path: ScanPath3D, T: RigidTransform) -> ScanPath3D:
        """刚体变换路径点，探头法向随之旋转"""
        return path.replace(T.apply_points(path.waypoints), approach_normal=T.apply_vector(path.approach_normal))

    def sweep_poses(self, path: ScanPath3D, margin: Optional[float] = None,
                    pose: Optional[RigidTransform] = None) -> List[SlicePose]:
        """
        沿路径（两端各延长 margin）按切片间距排列竖直切片

        Args:
            path: 世界坐标路径
            pose: 体模位姿（体模 → 世界），切片位姿换算到体模坐标
        """
        margin = float(self.settings.get('sweep_margin', 10.0) if margin is None else margin)
        spacing = float(self.settings.get('slice_spacing', 1.0))
        a, b = path.waypoints[0, :2], path.waypoints[-1, :2]
        if pose is not None:
            inverse = pose.invert()
            a, b = inverse.apply_xy(a), inverse.apply_xy(b)
        length = float(np.linalg.norm(b - a))
        if length == 0:
            raise DegenerateInputException("路径长度为零", error_code="ZERO_LENGTH_PATH")
        sweep = (b - a) / length
        offsets = np.arange(-margin, length + margin + spacing / 2.0, spacing)
        poses = []
        for i, t in enumerate(offsets):
            xy = a + t * sweep
            poses.append(SlicePose(np.array([xy[0], xy[1], float(self.phantom.height(xy[0], xy[1]))]),
                                   sweep, 0.0, i))
        return poses

    def fan_motion(self, pose: SlicePose, side: int, c_h: float) -> SlicePose:
        """把探头沿扫描方向移动 side·L_adj 并按倾角公式倾斜，使声束在质心深度回到原位置"""
        l_adj = side * self.l_adj
        theta = fan_tilt(FanAdjustParams(l_adj, c_h, self.geometry.pixel_size))
        xy = pose.contact[:2] + l_adj * pose.sweep
        contact = np.array([xy[0], xy[1], float(self.phantom.height(xy[0], xy[1]))])
        return SlicePose(contact, pose.sweep, theta, pose.index)

    def scan_target(self, path: ScanPath3D, pose: Optional[RigidTransform] = None,
                    fan: Optional[bool] = None, noise: Optional[float] = None,
                    seed: int = 0) -> ReconstructionResult:
        """
        沿迁移后的路径扫描目标并重建

        Args:
            path: 世界坐标下的目标路径
            pose: 体模位姿（体模 → 世界），重建点云换算回世界坐标
            fan: 是否启用扇形运动

        Returns:
            ReconstructionResult: 点云在世界坐标下
        """
        fan = bool(self.settings.get('fan_motion', True) if fan is None else fan)
        rng = np.random.default_rng(seed)
        poses = self.sweep_poses(path, pose=pose)
        segments = [self.segment_slice(self.render_slice(p, noise, True, rng)) for p in poses]
        coverage = coverage_check(segments)
        visible = [i for i, seg in enumerate(segments) if seg.has_target]

        fan_segments = []
        if fan and visible:
            visible_arr = np.array(visible)
            for entry in coverage:
                if not entry.trigger:
                    continue
                ref = int(visible_arr[np.argmin(np.abs(visible_arr - entry.index))])
                c_h = segments[ref].centroid_row
                tilted = self.fan_motion(poses[entry.index], entry.side, c_h)
                fan_segments.append(self.segment_slice(self.render_slice(tilted, noise, True, rng)))
        elif fan:
            logger.warning("所有切片都看不到目标，无法确定扇形运动的质心深度")

        cloud = reconstruct_target(segments + fan_segments, self.geometry)
        if pose is not None:
            cloud = cloud.with_points(pose.apply_points(cloud.points), "world")
        fraction = coverage_fraction(segments, fan_segments)
        logger.info(f"目标重建: {len(cloud)}个表面点, {sum(e.trigger for e in coverage)}张切片触发扇形运动, "
                    f"覆盖率 {fraction:.1%}")
        return ReconstructionResult(cloud, segments, fan_segments, coverage, fraction)

    def intercostal_paths(self, margin: float = 5.0, step: float = 1.0) -> List[ScanPath3D]:
        """模板空间中 x > 0 一侧各肋间隙的中线路径"""
        phantom = self.phantom
        sh, length = phantom.sternum_half, phantom.spec.rib_length
        paths = []
        for k, (y_mid, cot) in enumerate(phantom.gap_midlines()):
            u = np.array([margin, length - margin])
            x = sh + u
            y = y_mid + u * cot
            ends = np.column_stack([x, y, np.zeros(2)])
            waypoints = resample_polyline(ends, step)
            waypoints[:, 2] = phantom.height(waypoints[:, 0], waypoints[:, 1])
            paths.append(ScanPath3D(waypoints, path_id=f"G{k}"))
        return paths


# 便捷函数
def render_slice(phantom: PhantomModel, pose: SlicePose, noise: float = 0.0,
                 acoustic_shadow: bool = True) -> SliceImage:
    """便捷函数：渲染切片"""
    return PathTransfer(phantom).render_slice(pose, noise, acoustic_shadow)


def extract_centroids(phantom: PhantomModel, slice_spacing: Optional[float] = None,
                      noise: Optional[float] = None, sweep_axis=None, seed: int = 0) -> TargetCentroidSet:
    """便捷函数：提取目标质心"""
    return PathTransfer(phantom).extract_centroids(slice_spacing, sweep_axis, noise, seed=seed)


def plan_path(centroids: TargetCentroidSet, step: float = 1.0) -> ScanPath3D:
    """便捷函数：由质心规划路径"""
    return PathTransfer.plan_path(centroids, step)


def transfer_path(path: ScanPath3D, T: RigidTransform) -> ScanPath3D:
    """便捷函数：迁移路径"""
    return PathTransfer.transfer_path(path, T)


def fan_motion(phantom: PhantomModel, pose: SlicePose, side: int, c_h: float) -> SlicePose:
    """便捷函数：扇形运动后的切片位姿"""
    return PathTransfer(phantom).fan_motion(pose, side, c_h)


def intercostal_paths(phantom: PhantomModel, margin: float = 5.0) -> List[ScanPath3D]:
    """便捷函数：肋间隙中线路径"""
    return PathTransfer(phantom).intercostal_paths(margin)
