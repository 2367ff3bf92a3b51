# -*- coding: utf-8 -*-
"""
触觉点云构建模块
由已分类的扫描线生成稠密触觉点云：扫描方向 PCA、投影、DBSCAN 肋骨聚类、
两步插值（肋骨边界内插 + 边界间填充）、二维展平和降采样
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from sklearn.cluster import DBSCAN

from config import config, InsufficientDataException, ValidationException
from validator import validator
from tactile_phantom import PointCloud, PointCloudKind, is_bone_like, bone_runs
from tactile_scanplan import Plane, ScanPlanner, resample_polyline

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProjectionProfile:
    """各点在平均扫描方向上的投影值"""
    v_mean: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v_mean, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValidationException("v_mean 不能为零向量", error_code="ZERO_DIRECTION")
        object.__setattr__(self, 'v_mean', v / norm)
        object.__setattr__(self, 'values', np.asarray(self.values, dtype=float).reshape(-1))
        object.__setattr__(self, 'indices', np.asarray(self.indices, dtype=np.int64).reshape(-1))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class BoneInterval:
    """一条扫描线上的一段连续骨区"""
    path_id: str
    arc: Tuple[float, float]
    boundary: np.ndarray      # 2×3，入口点与出口点
    center: np.ndarray


@dataclass
class RibCluster:
    """同一根肋骨（或胸骨）上的骨区集合及其两条边界链"""
    cluster_id: int
    members: List[BoneInterval]
    chains: Tuple[np.ndarray, np.ndarray]
    interval: Tuple[float, float] = (0.0, 0.0)
    is_sternum: bool = False

    @property
    def boundary_points(self) -> np.ndarray:
        return np.vstack([m.boundary for m in self.members]) if self.members else np.zeros((0, 3))

    @property
    def path_ids(self) -> List[str]:
        return sorted({m.path_id for m in self.members})


def _scan_arrays(scan) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """兼容 TactileTrace 与 SignalWindow，返回 (位置, 标签, 弧长)"""
    pos = getattr(scan, 'pos', None)
    if pos is None:
        pos = getattr(scan, 'positions', None)
    if pos is None:
        raise ValidationException("扫描线缺少位置信息", error_code="MISSING_POSITIONS")
    pos = np.asarray(pos, dtype=float).reshape(-1, 3)
    labels = np.asarray(getattr(scan, 'labels'))
    arc = getattr(scan, 'arc_s', None)
    if arc is None:
        arc = scan.arc
    return pos, labels, np.asarray(arc, dtype=float)


def _path_points(path) -> np.ndarray:
    if isinstance(path, np.ndarray):
        return np.asarray(path, dtype=float).reshape(-1, 3)
    for attr in ('pos', 'positions', 'waypoints'):
        value = getattr(path, attr, None)
        if value is not None:
            return np.asarray(value, dtype=float).reshape(-1, 3)
    return np.asarray(path, dtype=float).reshape(-1, 3)


def mean_direction(paths: Sequence) -> np.ndarray:
    """
    平均扫描方向

    每条路径取第一主成分方向，首条路径按行进方向定号，其余与之对齐后求平均再归一化

    Raises:
        InsufficientDataException: 没有可用的非退化路径
    """
    directions = []
    for path in paths:
        pts = _path_points(path)
        if len(pts) < 2 or np.allclose(pts, pts[0]):
            logger.warning(f"路径{getattr(path, 'path_id', '?')}退化（点全部重合），跳过")
            continue
        centered = pts - pts.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        v = vt[0]
        if directions:
            if v @ directions[0] < 0:
                v = -v
        elif v @ (pts[-1] - pts[0]) < 0:
            v = -v
        directions.append(v)
    if not directions:
        raise InsufficientDataException("没有可用于估计扫描方向的路径", error_code="NO_VALID_PATHS")
    v_mean = np.mean(directions, axis=0)
    return v_mean / np.linalg.norm(v_mean)


def project_profile(points, v_mean) -> ProjectionProfile:
    """value_j = p_j · v_mean"""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    v = np.asarray(v_mean, dtype=float)
    v = v / np.linalg.norm(v)
    return ProjectionProfile(v, np.arange(len(pts)), pts @ v)


def cluster_ribs(profile, eps: Optional[float] = None, min_pts: Optional[int] = None) -> np.ndarray:
    """
    一维 DBSCAN 聚类，噪声点标记为 -1

    Args:
        profile: ProjectionProfile 或一维投影值
        eps: 邻域半径 (mm)
        min_pts: 核心点的最少邻居数（含自身）
    """
    settings = config.pointcloud_settings
    eps = validator.validate_positive(settings.get('dbscan_eps', 15.0) if eps is None else eps, 'eps')
    min_pts = int(settings.get('dbscan_min_pts', 2) if min_pts is None else min_pts)
    validator.validate_number_input(min_pts, min_val=1, field_name='min_pts')
    values = profile.values if isinstance(profile, ProjectionProfile) else np.asarray(profile, dtype=float)
    values = values.reshape(-1)
    if values.size == 0:
        return np.zeros(0, dtype=np.int64)
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit_predict(values.reshape(-1, 1)).astype(np.int64)
    n_clusters = len(set(labels.tolist()) - {-1})
    logger.debug(f"DBSCAN: {values.size}个点, {n_clusters}个簇, {int(np.sum(labels == -1))}个噪声点")
    return labels


def bone_intervals(scan, path_id: Optional[str] = None) -> List[BoneInterval]:
    """提取扫描线上每段连续骨区的入口点、出口点与中心"""
    pos, labels, arc = _scan_arrays(scan)
    path_id = path_id or getattr(scan, 'path_id', 'path')
    result = []
    for start, end in bone_runs(is_bone_like(labels)):
        result.append(BoneInterval(path_id, (float(arc[start]), float(arc[end])),
                                   np.array([pos[start], pos[end]]), pos[start:end + 1].mean(axis=0)))
    return result


def _lateral_axis(v_mean: np.ndarray) -> np.ndarray:
    lateral = np.array([v_mean[1], -v_mean[0], 0.0])
    norm = np.linalg.norm(lateral)
    return lateral / norm if norm > 0 else np.array([1.0, 0.0, 0.0])


def _split_chains(members: List[BoneInterval], split_axis: np.ndarray,
                  order_axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    low, high = [], []
    for m in members:
        a, b = m.boundary
        if a @ split_axis <= b @ split_axis:
            low.append(a)
            high.append(b)
        else:
            low.append(b)
            high.append(a)
    low, high = np.asarray(low), np.asarray(high)
    return low[np.argsort(low @ order_axis, kind='stable')], high[np.argsort(high @ order_axis, kind='stable')]


def build_clusters(parallel_scans: Sequence, sternum_scans: Sequence = (), v_mean: Optional[np.ndarray] = None,
                   eps: Optional[float] = None, min_pts: Optional[int] = None) -> List[RibCluster]:
    """
    把平行扫描线上的骨区按肋骨聚类，并由胸骨扫描线构建胸骨簇

    骨区中心在 v_mean 上的投影做 DBSCAN；每个肋骨簇的边界点沿 v_mean 分成上下两条链，
    链内按横向排序。胸骨簇取每条胸骨扫描线上最长的骨区，边界按横向分成左右两条链
    """
    if v_mean is None:
        v_mean = mean_direction(parallel_scans)
    v_mean = np.asarray(v_mean, dtype=float)
    lateral = _lateral_axis(v_mean)

    intervals = [iv for scan in parallel_scans for iv in bone_intervals(scan)]
    clusters = []
    if intervals:
        profile = project_profile(np.array([iv.center for iv in intervals]), v_mean)
        labels = cluster_ribs(profile, eps, min_pts)
        for label in sorted(set(labels.tolist()) - {-1}):
            members = [iv for iv, lab in zip(intervals, labels) if lab == label]
            values = profile.values[labels == label]
            chains = _split_chains(members, v_mean, lateral)
            clusters.append(RibCluster(len(clusters), members, chains, (float(values.min()), float(values.max()))))
    else:
        logger.warning("平行扫描线上没有骨区")

    sternum_members = []
    for scan in sternum_scans:
        found = bone_intervals(scan)
        if found:
            sternum_members.append(max(found, key=lambda iv: np.linalg.norm(iv.boundary[1] - iv.boundary[0])))
    if sternum_members:
        values = np.array([m.center @ v_mean for m in sternum_members])
        chains = _split_chains(sternum_members, lateral, v_mean)
        clusters.append(RibCluster(len(clusters), sternum_members, chains,
                                   (float(values.min()), float(values.max())), is_sternum=True))
    logger.info(f"肋骨聚类完成: {sum(not c.is_sternum for c in clusters)}个肋骨簇"
                f"{', 1个胸骨簇' if sternum_members else ''}")
    return clusters


def _at_normalized_arc(polyline: np.ndarray, t: np.ndarray) -> np.ndarray:
    if len(polyline) == 1:
        return np.repeat(polyline, len(t), axis=0)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(polyline, axis=0), axis=1))])
    s = t * arc[-1]
    return np.column_stack([np.interp(s, arc, polyline[:, k]) for k in range(polyline.shape[1])])


def fill_between(chain_a: np.ndarray, chain_b: np.ndarray, step: float = 1.0) -> np.ndarray:
    """
    两步插值：先把两条边界链按 step 重采样为折线，
    再在等归一化弧长的对应点之间按 step 线性填充（含端点）
    """
    ra = resample_polyline(chain_a, step)
    rb = resample_polyline(chain_b, step)
    count = max(len(ra), len(rb))
    t = np.linspace(0.0, 1.0, count)
    a = _at_normalized_arc(ra, t)
    b = _at_normalized_arc(rb, t)
    pieces = []
    for pa, pb in zip(a, b):
        n = max(int(np.ceil(np.linalg.norm(pb - pa) / step - 1e-9)), 1)
        f = np.linspace(0.0, 1.0, n + 1)[:, None]
        pieces.append(pa + (pb - pa) * f)
    return np.vstack(pieces)


def build_dense_pc(clusters: Sequence[RibCluster], step: Optional[float] = None) -> PointCloud:
    """
    由肋骨簇生成稠密触觉点云

    Returns:
        PointCloud: kind=tactile_dense；边界点不足的簇被跳过并告警
    """
    step = validator.validate_positive(config.pointcloud_settings.get('interp_step', 1.0)
                                       if step is None else step, 'step')
    parts = []
    for cluster in clusters:
        a, b = cluster.chains
        if len(a) < 2 or len(b) < 2:
            logger.warning(f"簇{cluster.cluster_id}只覆盖{len(cluster.path_ids)}条扫描线，跳过插值")
            continue
        parts.append(fill_between(a, b, step))
    if not parts:
        logger.warning("没有可插值的簇，稠密点云为空")
        return PointCloud(np.zeros((0, 3)), PointCloudKind.TACTILE_DENSE, "world", warning="no_clusters")
    points = np.vstack(parts)
    logger.info(f"稠密触觉点云: {len(points)}个点, 来自{len(parts)}个簇")
    return PointCloud(points, PointCloudKind.TACTILE_DENSE, "world")


def sparse_pc(clusters: Sequence[RibCluster]) -> PointCloud:
    """全部边界点组成的稀疏触觉点云"""
    pts = [c.boundary_points for c in clusters]
    points = np.vstack(pts) if pts else np.zeros((0, 3))
    return PointCloud(points, PointCloudKind.TACTILE_SPARSE, "world")


def flatten_2d(pc: PointCloud, plane: Optional[Plane] = None) -> PointCloud:
    """
    去掉体模平面法向分量，用平面内正交基表示 (x, y)，z 置零

    Args:
        pc: 点云
        plane: 体模平面，为空时对点云本身做平面拟合
    """
    if len(pc) == 0:
        raise InsufficientDataException("点云为空，无法展平", error_code="EMPTY_CLOUD")
    if pc.is_flat and plane is None:
        return pc
    plane = plane or ScanPlanner.fit_plane(pc.points)
    e1, e2 = plane.basis()
    rel = pc.points - plane.origin
    flat = np.column_stack([rel @ e1, rel @ e2, np.zeros(len(pc))])
    return PointCloud(flat, pc.kind, pc.frame_id, pc.warning, weights=pc.weights)


def downsample(pc: PointCloud, cell: Optional[float] = None) -> PointCloud:
    """
    每个非空体素保留一个质心点

    质心按输入点的质量加权，输出点的权重为体素内的总质量，
    因此降采样前后点云的总质量和一阶矩不变
    """
    cell = validator.validate_positive(config.pointcloud_settings.get('downsample_cell', 3.0)
                                       if cell is None else cell, 'cell')
    if len(pc) == 0:
        return pc
    keys = np.floor(pc.points / cell).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    count = int(inverse.max()) + 1
    mass = np.bincount(inverse, weights=pc.mass, minlength=count)
    sums = np.zeros((count, 3))
    np.add.at(sums, inverse, pc.points * pc.mass[:, None])
    centroids = sums / mass[:, None]
    if pc.is_flat:
        centroids[:, 2] = 0.0
    logger.debug(f"降采样: {len(pc)} → {len(centroids)}个点 (体素 {cell} mm)")
    return PointCloud(centroids, pc.kind, pc.frame_id, pc.warning, weights=mass)


def nn_spacing_cv(points) -> float:
    """最近邻间距的变异系数"""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    d, _ = cKDTree(pts).query(pts, k=2)
    nn = d[:, 1]
    return float(nn.std() / nn.mean()) if nn.mean() > 0 else 0.0


def cluster_summary(clusters: Sequence[RibCluster]) -> Dict[str, int]:
    return {
        'rib_clusters': sum(1 for c in clusters if not c.is_sternum),
        'sternum_clusters': sum(1 for c in clusters if c.is_sternum),
        'boundary_points': int(sum(len(c.boundary_points) for c in clusters)),
    }


class TactilePointCloudBuilder:
    """触觉点云构建器：聚类 → 稠密插值 → 展平 → 降采样"""

    def __init__(self, settings: Optional[Dict] = None):
        s = dict(config.pointcloud_settings if settings is None else settings)
        self.eps = float(s.get('dbscan_eps', 15.0))
        self.min_pts = int(s.get('dbscan_min_pts', 2))
        self.step = float(s.get('interp_step', 1.0))
        self.cell = float(s.get('downsample_cell', 3.0))

    def build(self, parallel_scans: Sequence, sternum_scans: Sequence = (),
              plane: Optional[Plane] = None) -> Tuple[List[RibCluster], PointCloud, PointCloud]:
        """
        Returns:
            (clusters, 三维稠密点云, 展平并降采样后的二维点云)
        """
        v_mean = mean_direction(parallel_scans)
        clusters = build_clusters(parallel_scans, sternum_scans, v_mean, self.eps, self.min_pts)
        dense = build_dense_pc(clusters, self.step)
        if len(dense) == 0:
            raise InsufficientDataException("触觉点云为空，无法配准", error_code="EMPTY_TACTILE_PC")
        flat = downsample(flatten_2d(dense, plane), self.cell)
        return clusters, dense, flat

    def prepare_template(self, template: PointCloud, plane: Optional[Plane] = None) -> PointCloud:
        """模板点云使用相同的展平和降采样"""
        if plane is None:
            plane = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
        return downsample(flatten_2d(template, plane), self.cell)
