# -*- coding: utf-8 -*-
"""
点云刚性配准模块
平面刚体变换工具，以及二维刚性 CPD（相干点漂移）配准
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.special import logsumexp

from config import config, DegenerateInputException, ValidationException, NumericException
from validator import validator
from tactile_phantom import PointCloud

logger = logging.getLogger(__name__)


def _normalize_angle(angle_deg: float) -> float:
    """把角度规范到 (-180, 180]"""
    return -((-float(angle_deg) + 180.0) % 360.0 - 180.0)


@dataclass(frozen=True)
class RigidTransform:
    """平面刚体变换：先绕原点旋转 angle_deg，再平移 (tx, ty)"""
    angle_deg: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'angle_deg', _normalize_angle(self.angle_deg))
        object.__setattr__(self, 'tx', float(self.tx))
        object.__setattr__(self, 'ty', float(self.ty))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, rotation: np.ndarray, translation: np.ndarray) -> "RigidTransform":
        angle = math.degrees(math.atan2(rotation[1, 0], rotation[0, 0]))
        return cls(angle, translation[0], translation[1])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    @property
    def rotation(self) -> np.ndarray:
        a = math.radians(self.angle_deg)
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, -s], [s, c]])

    def as_matrix(self) -> np.ndarray:
        """3×3 齐次矩阵"""
        m = np.eye(3)
        m[:2, :2] = self.rotation
        m[:2, 2] = self.translation
        return m

    def apply_xy(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return xy @ self.rotation.T + self.translation

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """作用于 (N,3) 点，只变换 x、y，z 保持不变"""
        pts = np.array(points, dtype=float).reshape(-1, 3)
        pts[:, :2] = self.apply_xy(pts[:, :2])
        return pts

    def apply_vector(self, vec: np.ndarray) -> np.ndarray:
        """作用于方向向量（只旋转）"""
        v = np.array(vec, dtype=float)
        v[..., :2] = v[..., :2] @ self.rotation.T
        return v

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """返回 self ∘ other，即先施加 other"""
        t = self.rotation @ other.translation + self.translation
        return RigidTransform(self.angle_deg + other.angle_deg, t[0], t[1])

    def invert(self) -> "RigidTransform":
        t = -(self.rotation.T @ self.translation)
        return RigidTransform(-self.angle_deg, t[0], t[1])

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)


@dataclass
class CpdConfig:
    """CPD 配准参数，sigma2_floor > 0 时 σ² 不再低于该值"""
    outlier_weight: float = 0.1
    max_iterations: int = 200
    tolerance: float = 1e-8
    min_sigma2: float = 1e-12
    initial_sigma2: Optional[float] = None
    sigma2_floor: float = 0.0

    @classmethod
    def from_config(cls, settings: Optional[Dict] = None, **overrides) -> "CpdConfig":
        settings = dict(config.registration_settings if settings is None else settings)
        settings.update(overrides)
        return cls(**{k: v for k, v in settings.items() if k in cls.__dataclass_fields__})


@dataclass
class CpdResult:
    """CPD 配准结果：transform 把源点云（移动）映射到目标点云（数据）"""
    transform: RigidTransform
    sigma2_final: float
    iterations: int
    log_likelihood: List[float] = field(default_factory=list)
    converged: bool = False


def _point_weights(weights: Optional[np.ndarray], count: int, name: str) -> np.ndarray:
    if weights is None:
        return np.ones(count)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != count or not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValidationException(f"{name}权重必须是{count}个正的有限值", error_code="INVALID_WEIGHTS")
    return w


class CpdRegistration:
    """
    二维刚性 CPD 配准器，源点云为高斯混合中心，目标点云为观测数据

    源点云权重归一化后作为各混合分量的先验，目标点云权重作为各观测的重数，缺省时全为 1。
    权重为整数时与把每个点重复相应次数的未加权配准完全等价
    """

    def __init__(self, source: np.ndarray, target: np.ndarray, cfg: Optional[CpdConfig] = None,
                 source_weights: Optional[np.ndarray] = None, target_weights: Optional[np.ndarray] = None):
        self.cfg = cfg or CpdConfig.from_config()
        validator.validate_cpd_config(self.cfg)
        self.Y = np.asarray(source, dtype=float)
        self.X = np.asarray(target, dtype=float)
        (self.N, self.D) = self.X.shape
        (self.M, _) = self.Y.shape
        prior = _point_weights(source_weights, self.M, "源点云")
        self.prior = prior / prior.sum()
        self.log_prior = np.log(self.prior)
        self.omega = _point_weights(target_weights, self.N, "目标点云")
        self.N_eff = float(self.omega.sum())
        self.R = np.eye(self.D)
        self.t = np.zeros(self.D)
        self.TY = self.Y.copy()
        self.floor = float(self.cfg.sigma2_floor)
        self.sigma2 = max(self.cfg.initial_sigma2 or self.initialize_sigma2(), self.floor)
        self.w = float(self.cfg.outlier_weight)
        self.iteration = 0
        self.P = np.zeros((self.M, self.N))
        self.Pt1 = np.zeros(self.N)
        self.P1 = np.zeros(self.M)
        self.Np = 0.0
        self.log_likelihood: List[float] = []
        self.converged = False
        self._x_sq = np.sum(self.X ** 2, axis=1)

    def initialize_sigma2(self) -> float:
        """按点质量加权的平均点对距离平方"""
        diff = self.X[None, :, :] - self.Y[:, None, :]
        d2 = np.sum(diff ** 2, axis=2)
        return float(self.prior @ d2 @ self.omega / (self.D * self.N_eff))

    def _log_terms(self):
        """返回 (每对点的对数先验加指数项, 每个数据点的对数归一化项, 离群项常数的对数)"""
        d2 = self._x_sq[None, :] + np.sum(self.TY ** 2, axis=1)[:, None] - 2.0 * (self.TY @ self.X.T)
        np.maximum(d2, 0.0, out=d2)
        log_kernel = self.log_prior[:, None] - d2 / (2.0 * self.sigma2)
        if self.w > 0:
            log_c = (self.D / 2.0) * math.log(2.0 * math.pi * self.sigma2) \
                + math.log(self.w / (1.0 - self.w)) - math.log(self.N_eff)
        else:
            log_c = -np.inf
        log_den = np.logaddexp(logsumexp(log_kernel, axis=0), log_c)
        return log_kernel, log_den, log_c

    def _log_likelihood_from(self, log_den: np.ndarray) -> float:
        const = math.log(1.0 - self.w) - (self.D / 2.0) * math.log(2.0 * math.pi * self.sigma2)
        return float(self.omega @ (log_den + const))

    def current_log_likelihood(self) -> float:
        """当前参数下按观测重数加权的数据对数似然"""
        _, log_den, _ = self._log_terms()
        return self._log_likelihood_from(log_den)

    def expectation(self) -> float:
        """E步：计算软对应概率，返回当前参数下的对数似然"""
        log_kernel, log_den, _ = self._log_terms()
        self.P = np.exp(log_kernel - log_den[None, :]) * self.omega[None, :]
        self.Pt1 = self.P.sum(axis=0)
        self.P1 = self.P.sum(axis=1)
        self.Np = float(self.P1.sum())
        return self._log_likelihood_from(log_den)

    def maximization(self):
        """M步：SVD 正交 Procrustes 求旋转，闭式求平移与方差"""
        if self.Np <= 0:
            raise NumericException("CPD 对应概率全部为零", error_code="CPD_EMPTY_POSTERIOR")
        mu_x = self.X.T @ self.Pt1 / self.Np
        mu_y = self.Y.T @ self.P1 / self.Np
        X_hat = self.X - mu_x
        Y_hat = self.Y - mu_y
        A = X_hat.T @ self.P.T @ Y_hat
        U, _, Vt = np.linalg.svd(A)
        C = np.eye(self.D)
        C[-1, -1] = np.linalg.det(U @ Vt)
        self.R = U @ C @ Vt
        self.t = mu_x - self.R @ mu_y
        self.TY = self.Y @ self.R.T + self.t

        xPx = float(self.Pt1 @ np.sum(X_hat ** 2, axis=1))
        yPy = float(self.P1 @ np.sum(Y_hat ** 2, axis=1))
        trAR = float(np.trace(A.T @ self.R))
        self.sigma2 = (xPx - 2.0 * trAR + yPy) / (self.Np * self.D)

    def register(self, callback=None) -> CpdResult:
        """迭代 EM 直到对数似然变化低于容差或达到最大迭代次数"""
        previous = None
        while True:
            current = self.expectation()
            self.log_likelihood.append(current)
            if previous is not None:
                if callable(callback):
                    callback(iteration=self.iteration, sigma2=self.sigma2, log_likelihood=current)
                if abs(current - previous) <= self.cfg.tolerance * max(abs(current), 1.0):
                    self.converged = True
                    break
            if self.iteration >= self.cfg.max_iterations:
                break
            self.maximization()
            self.iteration += 1
            if not np.isfinite(self.sigma2):
                raise NumericException("CPD 方差出现非有限值", error_code="CPD_NAN")
            if self.sigma2 < self.cfg.min_sigma2 and self.floor < self.cfg.min_sigma2:
                self.sigma2 = max(self.sigma2, 0.0)
                self.converged = True
                logger.debug(f"σ²塌缩至{self.sigma2:.3e}，第{self.iteration}次迭代收敛")
                break
            self.sigma2 = max(self.sigma2, self.floor)
            previous = current

        transform = RigidTransform.from_matrix(self.R, self.t)
        logger.info(f"CPD 配准完成: {self.iteration}次迭代, 角度 {transform.angle_deg:.3f}°, "
                    f"平移 ({transform.tx:.2f}, {transform.ty:.2f}) mm, σ²={self.sigma2:.4g}")
        return CpdResult(transform, float(self.sigma2), self.iteration, list(self.log_likelihood), self.converged)


def _as_flat_xy(pc, name: str) -> np.ndarray:
    if isinstance(pc, PointCloud):
        if len(pc) and not pc.is_flat:
            raise ValidationException(f"{name}必须是展平后的点云 (z=0)", error_code="NOT_FLAT")
        xy = pc.xy
    else:
        xy = np.asarray(pc, dtype=float)
        xy = xy[:, :2] if xy.ndim == 2 and xy.shape[1] >= 2 else xy.reshape(-1, 2)
    if xy.shape[0] < 3:
        raise ValidationException(f"{name}至少需要3个点", error_code="TOO_FEW_POINTS")
    if np.allclose(xy, xy[0]):
        raise DegenerateInputException(f"{name}所有点重合", error_code="COINCIDENT_CLOUD")
    return xy


# 便捷函数
def cpd_rigid(source, target, cfg: Optional[CpdConfig] = None, callback=None) -> CpdResult:
    """
    便捷函数：二维刚性 CPD 配准

    Args:
        source: 移动点云（触觉点云），展平；带权重时权重作为混合先验
        target: 数据点云（模板点云），展平；带权重时权重作为观测重数
        cfg: CPD 配置

    Returns:
        CpdResult: transform 满足 transform(source) ≈ target
    """
    Y = _as_flat_xy(source, "源点云")
    X = _as_flat_xy(target, "目标点云")
    return CpdRegistration(Y, X, cfg, getattr(source, 'weights', None),
                           getattr(target, 'weights', None)).register(callback)


def apply_transform(pc: PointCloud, T: RigidTransform) -> PointCloud:
    """便捷函数：对点云施加刚体变换"""
    return pc.with_points(T.apply_points(pc.points))


def registration_error(T_est: RigidTransform, T_gt: RigidTransform,
                       pivot: Optional[np.ndarray] = None) -> Dict[str, float]:
    """
    计算配准误差

    Args:
        T_est: 估计变换
        T_gt: 真值变换
        pivot: 评估平移误差的参考点（模板质心），默认原点

    Returns:
        Dict: dist (mm) 为 pivot 处两变换结果之差的范数，ang (deg) 为残余旋转角的绝对值
    """
    p = np.zeros(2) if pivot is None else np.asarray(pivot, dtype=float)[:2]
    residual = T_est.compose(T_gt.invert())
    dist = float(np.linalg.norm(T_est.apply_xy(p) - T_gt.apply_xy(p)))
    return {'dist': dist, 'ang': abs(residual.angle_deg)}
