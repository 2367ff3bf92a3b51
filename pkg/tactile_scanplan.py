# -*- coding: utf-8 -*-
"""
扫描路径规划模块
用平面拟合和二维到三维仿射变换把预定义的扫描模板映射到体模表面，
并由肋间局部极小值推导跨越胸骨的扫描路径
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import config, DegenerateInputException, InsufficientDataException, ValidationException
from validator import validator
from tactile_phantom import PhantomModel, is_bone_like, bone_runs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Plane:
    """平面 ax+by+cz+d=0，法向量为单位向量且 c ≥ 0"""
    normal: np.ndarray
    offset: float
    residual: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise DegenerateInputException("平面法向量为零", error_code="ZERO_NORMAL")
        object.__setattr__(self, 'normal', n / norm)
        object.__setattr__(self, 'offset', float(self.offset) / norm)

    @property
    def coefficients(self) -> np.ndarray:
        return np.append(self.normal, self.offset)

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal + self.offset

    @property
    def origin(self) -> np.ndarray:
        """平面上离世界原点最近的点"""
        return -self.offset * self.normal

    def basis(self) -> Tuple[np.ndarray, np.ndarray]:
        """平面内正交基：e1 为世界 x 轴在平面上的投影"""
        n = self.normal
        ref = np.array([1.0, 0.0, 0.0])
        e1 = ref - (ref @ n) * n
        if np.linalg.norm(e1) < 1e-9:
            ref = np.array([0.0, 1.0, 0.0])
            e1 = ref - (ref @ n) * n
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        return e1, e2


@dataclass(frozen=True)
class AffineMap2D3D:
    """把齐次模板像素 [u,v,1] 映射为三维点 (mm) 的 3×3 矩阵"""
    matrix: np.ndarray
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(4))
    plane: Optional[Plane] = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValidationException("仿射矩阵必须是有限的3×3矩阵", error_code="INVALID_AFFINE")
        object.__setattr__(self, 'matrix', m)

    def apply(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        homo = np.column_stack([uv, np.ones(len(uv))])
        return homo @ self.matrix.T


@dataclass
class ScanPathTemplate:
    """扫描模板：四个角点像素坐标和像素坐标下的折线"""
    corner_pixels: np.ndarray
    lines: List[np.ndarray]
    line_ids: List[str]

    def __post_init__(self):
        self.corner_pixels = np.asarray(self.corner_pixels, dtype=float).reshape(4, 2)
        self.lines = [np.asarray(line, dtype=float).reshape(-1, 2) for line in self.lines]
        if len(self.line_ids) != len(self.lines):
            raise ValidationException("line_ids 与 lines 数量不一致", error_code="TEMPLATE_MISMATCH")
        if not _is_convex(self.corner_pixels):
            raise ValidationException("模板角点必须构成凸四边形", error_code="NON_CONVEX_CORNERS")
        for line_id, line in zip(self.line_ids, self.lines):
            if not np.all(_inside_convex(self.corner_pixels, line)):
                raise ValidationException(f"扫描线{line_id}超出角点范围", error_code="LINE_OUTSIDE_HULL")

    def lines_of_kind(self, prefix: str) -> List[int]:
        return [i for i, line_id in enumerate(self.line_ids) if line_id.startswith(prefix)]


@dataclass
class ScanPath3D:
    """三维扫描路径"""
    waypoints: np.ndarray
    approach_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    speed: float = 4.86
    desired_force: float = 3.0
    path_id: str = "path"
    truncated: bool = False
    tilt_deg: Optional[np.ndarray] = None
    trigger: Optional[np.ndarray] = None

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        validator.validate_points(self.waypoints, field_name=f"路径{self.path_id}")
        if len(self.waypoints) > 1:
            steps = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
            if np.any(steps == 0):
                raise ValidationException(f"路径{self.path_id}存在重复的相邻路径点", error_code="DUPLICATE_WAYPOINT")
        n = np.asarray(self.approach_normal, dtype=float)
        self.approach_normal = n / np.linalg.norm(n)

    @property
    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    @property
    def direction(self) -> np.ndarray:
        d = self.waypoints[-1] - self.waypoints[0]
        return d / np.linalg.norm(d)

    def replace(self, waypoints: np.ndarray, **changes) -> "ScanPath3D":
        params = dict(approach_normal=self.approach_normal, speed=self.speed,
                      desired_force=self.desired_force, path_id=self.path_id, truncated=self.truncated)
        params.update(changes)
        return ScanPath3D(waypoints, **params)


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _is_convex(corners: np.ndarray) -> bool:
    edges = np.roll(corners, -1, axis=0) - corners
    turns = _cross2(edges, np.roll(edges, -1, axis=0))
    return bool(np.all(turns > 0) or np.all(turns < 0))


def _inside_convex(corners: np.ndarray, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    edges = np.roll(corners, -1, axis=0) - corners
    orientation = np.sign(_cross2(edges[0], edges[1]))
    rel = points[:, None, :] - corners[None, :, :]
    side = _cross2(edges[None, :, :], rel) * orientation
    return np.all(side >= -tol, axis=1)


def resample_polyline(points: np.ndarray, step: float) -> np.ndarray:
    """沿折线按弧长等间距采样，包含两端点"""
    points = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 0])
    points = points[keep]
    if len(points) < 2:
        return points.copy()
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))])
    n = max(int(np.ceil(arc[-1] / step - 1e-9)), 1)
    s = np.linspace(0.0, arc[-1], n + 1)
    return np.column_stack([np.interp(s, arc, points[:, k]) for k in range(points.shape[1])])


class ScanPlanner:
    """扫描路径规划器"""

    def __init__(self, settings: Optional[dict] = None):
        self.settings = dict(config.scan_settings if settings is None else settings)
        self.controller = config.controller_settings

    @staticmethod
    def fit_plane(corners) -> Plane:
        """
        主成分分析拟合平面

        Args:
            corners: N×3 点（N ≥ 3）

        Returns:
            Plane: 最小化点到平面距离平方和的平面，residual 为该平方和

        Raises:
            DegenerateInputException: 点共线或重合
        """
        pts = np.asarray(corners, dtype=float).reshape(-1, 3)
        if len(pts) < 3:
            raise DegenerateInputException("拟合平面至少需要3个点", error_code="TOO_FEW_CORNERS")
        centroid = pts.mean(axis=0)
        _, s, vt = np.linalg.svd(pts - centroid)
        scale = max(s[0], 1e-300)
        if s[0] < 1e-12 or s[1] / scale < 1e-9:
            raise DegenerateInputException("角点共线或重合，无法拟合平面", error_code="DEGENERATE_CORNERS")
        normal = vt[2]
        if normal[2] < 0 or (normal[2] == 0 and normal[np.nonzero(normal)[0][0]] < 0):
            normal = -normal
        offset = -float(normal @ centroid)
        residual = float(np.sum((pts @ normal + offset) ** 2))
        return Plane(normal, offset, residual)

    @staticmethod
    def project_to_plane(p, plane: Plane) -> np.ndarray:
        """p' = p − d⊥·n"""
        p = np.asarray(p, dtype=float)
        d = p @ plane.normal + plane.offset
        return p - d[..., None] * plane.normal if p.ndim > 1 else p - d * plane.normal

    @staticmethod
    def solve_affine(corners2d, corners3d, plane: Optional[Plane] = None) -> AffineMap2D3D:
        """
        最小二乘求解 T，使 T·[u,v,1]ᵀ 逼近对应的三维角点

        Raises:
            DegenerateInputException: 二维角点秩亏
        """
        uv = np.asarray(corners2d, dtype=float).reshape(-1, 2)
        xyz = np.asarray(corners3d, dtype=float).reshape(-1, 3)
        if len(uv) != len(xyz):
            raise ValidationException("二维与三维角点数量不一致", error_code="CORNER_COUNT_MISMATCH")
        A = np.column_stack([uv, np.ones(len(uv))])
        if np.linalg.matrix_rank(A) < 3:
            raise DegenerateInputException("二维角点仿射相关（秩亏）", error_code="RANK_DEFICIENT")
        sol, _, _, _ = np.linalg.lstsq(A, xyz, rcond=None)
        T = sol.T
        residuals = np.linalg.norm(A @ sol - xyz, axis=1)
        return AffineMap2D3D(T, residuals, plane)

    def map_template(self, template: ScanPathTemplate, T: AffineMap2D3D,
                     phantom: PhantomModel, pose=None) -> List[ScanPath3D]:
        """
        把模板折线逐点映射到三维，投影回拟合平面并按 1mm 采样

        Args:
            template: 扫描模板
            T: 仿射映射
            phantom: 体模（用于越界检查）
            pose: 体模位姿（体模坐标 → 世界坐标），默认不位移

        Returns:
            List[ScanPath3D]: 每条模板线一条路径，越界部分被截断
        """
        step = float(self.settings.get('line_step', 1.0))
        normal = T.plane.normal if T.plane is not None else np.array([0.0, 0.0, 1.0])
        inverse = pose.invert() if pose is not None else None
        paths = []
        correction = 0.0
        for line_id, line in zip(template.line_ids, template.lines):
            mapped = T.apply(line)
            if T.plane is not None:
                projected = self.project_to_plane(mapped, T.plane)
                correction = max(correction, float(np.max(np.linalg.norm(projected - mapped, axis=1))))
                mapped = projected
            pts = resample_polyline(mapped, step)
            local = inverse.apply_xy(pts[:, :2]) if inverse is not None else pts[:, :2]
            inside = phantom.contains(local[:, 0], local[:, 1])
            truncated = not bool(np.all(inside))
            if truncated:
                runs = bone_runs(inside)
                if not runs:
                    logger.warning(f"扫描线{line_id}完全位于体模范围之外，已跳过")
                    continue
                start, end = max(runs, key=lambda r: r[1] - r[0])
                pts = pts[start:end + 1]
                logger.warning(f"扫描线{line_id}部分超出体模范围，截断为{len(pts)}个路径点")
            if len(pts) < 2:
                logger.warning(f"扫描线{line_id}有效路径点不足，已跳过")
                continue
            paths.append(ScanPath3D(pts, normal, float(self.controller.get('speed', 4.86)),
                                    float(self.controller.get('desired_force', 3.0)), line_id, truncated))
        if correction > 0:
            logger.debug(f"映射点投影回拟合平面的最大修正量: {correction:.3e} mm")
        return paths

    def plan_from_corners(self, template: ScanPathTemplate, corners3d, phantom: PhantomModel,
                          pose=None) -> Tuple[Plane, AffineMap2D3D, List[ScanPath3D]]:
        """平面拟合 → 角点投影 → 仿射求解 → 模板映射"""
        plane = self.fit_plane(corners3d)
        projected = self.project_to_plane(np.asarray(corners3d, dtype=float), plane)
        T = self.solve_affine(template.corner_pixels, projected, plane)
        logger.info(f"平面拟合残差 {plane.residual:.4f} mm², 仿射残差最大 {T.residuals.max():.2e} mm")
        return plane, T, self.map_template(template, T, phantom, pose)

    def derive_sternum_paths(self, traces: Sequence, plane: Optional[Plane] = None,
                             count: int = 3) -> List[ScanPath3D]:
        """
        由平行扫描线上肋间隙的局部极小值推导跨胸骨扫描路径

        Args:
            traces: 已分类的平行扫描线（需含 arc_s、pos、dz、labels）
            plane: 拟合平面，给定时路径点投影到平面上
            count: 路径数量，取最靠中间的若干个肋间隙

        Returns:
            List[ScanPath3D]: min(count, 肋间隙数) 条路径

        Raises:
            InsufficientDataException: 肋间隙少于2个
        """
        neighborhood = int(self.settings.get('minima_neighborhood', 5))
        tolerance = float(self.settings.get('minima_tolerance', 0.2))
        step = float(self.settings.get('line_step', 1.0))

        per_line = []
        for trace in traces:
            minima = gap_minima(trace, neighborhood, tolerance)
            if minima:
                per_line.append(np.asarray(minima))
        if not per_line:
            raise InsufficientDataException("肋骨结构不足: 未检测到肋间隙", error_code="INSUFFICIENT_RIBS")

        directions = []
        for trace in traces:
            d = trace.pos[-1, :2] - trace.pos[0, :2]
            if np.linalg.norm(d) > 0:
                d = d / np.linalg.norm(d)
                if directions and d @ directions[0] < 0:
                    d = -d
                directions.append(d)
        axis = np.mean(directions, axis=0)
        axis /= np.linalg.norm(axis)
        lateral = np.array([axis[1], -axis[0]])

        reference = max(per_line, key=len)
        if len(reference) < 2:
            raise InsufficientDataException("肋骨结构不足: 肋间隙少于2个", error_code="INSUFFICIENT_RIBS")
        ref_proj = reference[:, :2] @ axis
        order = np.argsort(ref_proj)
        reference, ref_proj = reference[order], ref_proj[order]
        match_tol = float(np.min(np.diff(ref_proj))) / 2.0 if len(ref_proj) > 1 else np.inf

        centre = np.mean(ref_proj)
        chosen = np.sort(np.argsort(np.abs(ref_proj - centre), kind='stable')[:count])
        normal = plane.normal if plane is not None else np.array([0.0, 0.0, 1.0])
        paths = []
        for k, g in enumerate(chosen):
            points = []
            for minima in per_line:
                proj = minima[:, :2] @ axis
                j = int(np.argmin(np.abs(proj - ref_proj[g])))
                if abs(proj[j] - ref_proj[g]) <= match_tol:
                    points.append(minima[j])
            points = np.asarray(points)
            if len(points) < 2:
                logger.warning(f"第{g}个肋间隙只在{len(points)}条扫描线上检测到，跳过")
                continue
            points = points[np.argsort(points[:, :2] @ lateral)]
            waypoints = resample_polyline(points, step)
            if plane is not None:
                waypoints = self.project_to_plane(waypoints, plane)
            paths.append(ScanPath3D(waypoints, normal, float(self.controller.get('speed', 4.86)),
                                    float(self.controller.get('desired_force', 3.0)), f"S{k}"))
        if len(paths) < min(2, count):
            raise InsufficientDataException("肋骨结构不足: 可连接的肋间隙少于2个", error_code="INSUFFICIENT_RIBS")
        logger.info(f"推导出{len(paths)}条胸骨扫描路径")
        return paths


def gap_minima(trace, neighborhood: int = 5, tolerance: float = 0.2) -> List[np.ndarray]:
    """
    在相邻骨段之间的每个间隙内寻找压入深度的局部极小值

    剖面取重采样后未滤波的 z，在每个间隙内减去二次拟合趋势。
    候选点为邻域内的最小值；与最低候选相差不超过 tolerance 的样本视为并列，取最靠近间隙中点者
    """
    bone = is_bone_like(trace.labels)
    runs = bone_runs(bone)
    z = np.asarray(trace.z_raw, dtype=float)
    arc = np.asarray(trace.arc_s, dtype=float)
    half = neighborhood // 2
    result = []
    for (_, end_a), (start_b, _) in zip(runs[:-1], runs[1:]):
        lo, hi = end_a + 1, start_b - 1
        if hi < lo:
            continue
        idx = np.arange(lo, hi + 1)
        if idx.size >= 10:
            # 只在间隙中部 60% 内搜索
            trim = idx.size // 5
            idx = idx[trim:idx.size - trim]
        profile = z[idx]
        if idx.size >= 4:
            s = arc[idx] - arc[idx].mean()
            profile = profile - np.polyval(np.polyfit(s, profile, 2), s)
        padded = np.pad(profile, half, mode='edge')
        window_min = np.min(np.lib.stride_tricks.sliding_window_view(padded, neighborhood), axis=1)
        candidates = idx[profile <= window_min]
        if candidates.size == 0:
            candidates = idx
        best = profile[candidates - idx[0]].min()
        tied = idx[profile <= best + tolerance]
        mid = 0.5 * (trace.arc_s[lo] + trace.arc_s[hi])
        pick = tied[np.argmin(np.abs(trace.arc_s[tied] - mid))]
        result.append(np.asarray(trace.pos[pick], dtype=float))
    return result


def default_template(corner_pixels=None, parallel_fractions=None,
                     orthogonal_fractions=None) -> ScanPathTemplate:
    """
    构建 8 条平行于胸骨中线 + 3 条正交扫描线的模板

    线的位置由角点双线性插值得到，u 方向为横向，v 方向沿胸骨
    """
    scan = config.scan_settings
    corners = np.asarray(corner_pixels if corner_pixels is not None else scan['corner_pixels'], dtype=float)
    corners = corners.reshape(-1, 2)
    par = parallel_fractions if parallel_fractions is not None else scan['parallel_fractions']
    orth = orthogonal_fractions if orthogonal_fractions is not None else scan['orthogonal_fractions']

    def bilinear(fu: float, fv: float) -> np.ndarray:
        p00, p10, p11, p01 = corners
        return ((1 - fu) * (1 - fv) * p00 + fu * (1 - fv) * p10 + fu * fv * p11 + (1 - fu) * fv * p01)

    lines, ids = [], []
    for i, f in enumerate(par):
        lines.append(np.array([bilinear(f, 0.0), bilinear(f, 1.0)]))
        ids.append(f"P{i}")
    for i, f in enumerate(orth):
        lines.append(np.array([bilinear(0.0, f), bilinear(1.0, f)]))
        ids.append(f"O{i}")
    return ScanPathTemplate(corners, lines, ids)


def plane_residual(points, plane: Plane) -> float:
    """点到平面距离平方和"""
    return float(np.sum(plane.signed_distance(points) ** 2))


# 便捷函数
def fit_plane(corners) -> Plane:
    """便捷函数：拟合平面"""
    return ScanPlanner.fit_plane(corners)


def project_to_plane(p, plane: Plane) -> np.ndarray:
    """便捷函数：投影到平面"""
    return ScanPlanner.project_to_plane(p, plane)


def solve_affine(corners2d, corners3d, plane: Optional[Plane] = None) -> AffineMap2D3D:
    """便捷函数：求解二维到三维仿射变换"""
    return ScanPlanner.solve_affine(corners2d, corners3d, plane)


def map_template(template: ScanPathTemplate, T: AffineMap2D3D, phantom: PhantomModel, pose=None) -> List[ScanPath3D]:
    """便捷函数：映射扫描模板"""
    return ScanPlanner().map_template(template, T, phantom, pose)


def derive_sternum_paths(traces: Sequence, plane: Optional[Plane] = None, count: int = 3) -> List[ScanPath3D]:
    """便捷函数：推导胸骨扫描路径"""
    return ScanPlanner().derive_sternum_paths(traces, plane, count)
