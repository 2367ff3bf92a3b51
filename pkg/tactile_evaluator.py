# -*- coding: utf-8 -*-
"""
流水线评估模块
点云距离指标（MNND、Hausdorff），以及
体模 → 扫描 → 分类 → 聚类 → 配准 → 迁移 → 重建 的完整试验编排和报告汇总
"""

import os
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from config import Config, config as global_config, InsufficientDataException, StageException, ValidationException
from tactile_phantom import (PointCloud, RibCageSpec, build_phantom, sample_template_pc,
                             sample_target_gt, is_bone_like, transition_labels)
from tactile_scanplan import ScanPlanner, ScanPath3D, Plane, default_template
from tactile_simulator import (ControllerParams, TactileSimulator, contrast_scaled_spec,
                               generate_training_scans)
from tactile_classifier import (BoneClassifier, NetworkArch, TrainConfig, forward, segment,
                                detection_metrics, summarize_detection)
from tactile_pointcloud import TactilePointCloudBuilder
from tactile_registration import CpdConfig, RigidTransform, cpd_rigid, registration_error
from tactile_pathtransfer import PathTransfer
from tactile_visualizer import PipelineVisualizer, save_figures
from utils import ResultCache, Stopwatch, config_hash, progress_callback, result_cache

logger = logging.getLogger(__name__)

SCENARIOS = ('default', 'identity', 'leave_one_out', 'domain_shift')
METRICS = ('accuracy', 'centroid_shift', 'reg_dist', 'reg_ang', 'path_mnnd', 'path_hd',
           'target_path_mnnd', 'recon_mnnd', 'recon_hd', 'coverage', 'runtime')


def _as_points(pc) -> np.ndarray:
    pts = pc.points if isinstance(pc, PointCloud) else np.asarray(pc, dtype=float)
    pts = np.atleast_2d(pts)
    if pts.size == 0 or len(pts) == 0:
        raise InsufficientDataException("点云为空，无法计算距离", error_code="EMPTY_CLOUD")
    return pts


def nearest_distances(a, b) -> np.ndarray:
    """a 中每个点到 b 的最近距离"""
    pa, pb = _as_points(a), _as_points(b)
    if pa.shape[1] != pb.shape[1]:
        raise ValidationException("两个点云维度不一致", error_code="DIMENSION_MISMATCH")
    d, _ = cKDTree(pb).query(pa, k=1)
    return np.asarray(d, dtype=float)


def mnnd(a, b) -> float:
    """有向平均最近邻距离 a → b (mm)"""
    return float(np.mean(nearest_distances(a, b)))


def hausdorff(a, b) -> float:
    """对称 Hausdorff 距离 (mm)"""
    return float(max(np.max(nearest_distances(a, b)), np.max(nearest_distances(b, a))))


@dataclass
class EvalReport:
    """评估报告：逐次试验指标、汇总、配置快照"""
    scenario: str
    seed: int
    rows: List[Dict[str, Any]] = field(default_factory=list)
    classification: Dict[str, float] = field(default_factory=dict)
    config_snapshot: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        columns = ['trial', 'scenario'] + list(METRICS) + ['accuracy_defined', 'cpd_iterations',
                                                         'gt_angle_deg', 'gt_tx_mm', 'gt_ty_mm']
        return pd.DataFrame(self.rows).reindex(columns=columns)

    @property
    def summary(self) -> Dict[str, Any]:
        """均值 ± 标准差；未定义的指标（NaN）不参与统计但计数"""
        df = self.to_frame()
        result: Dict[str, Any] = {'scenario': self.scenario, 'seed': self.seed, 'trials': len(df),
                                  'mnnd_direction_path': 'transferred->gt',
                                  'mnnd_direction_recon': 'recon->gt'}
        for metric in METRICS:
            values = pd.to_numeric(df[metric], errors='coerce').dropna() if len(df) else pd.Series(dtype=float)
            result[f"{metric}_mean"] = float(values.mean()) if len(values) else float('nan')
            result[f"{metric}_sd"] = float(values.std(ddof=0)) if len(values) else float('nan')
            result[f"{metric}_undefined"] = int(len(df) - len(values))
        for key, value in self.classification.items():
            result[f"cls_{key}"] = value
        return result


class PipelineEvaluator:
    """评估编排器"""

    def __init__(self, cfg: Optional[Config] = None, cache: Optional[ResultCache] = None):
        self.config = cfg or global_config
        self.cache = cache or result_cache

    # ---- 场景与缓存 ----

    @staticmethod
    def scenario_config(base: Config, scenario: str) -> Config:
        """
        场景覆盖：identity 为零位移零噪声并使用真值标签，leave_one_out 去掉一条平行扫描线，
        domain_shift 把骨/间隙对比度减半
        """
        if scenario not in SCENARIOS:
            raise ValidationException(f"未知场景: {scenario}", error_code="UNKNOWN_SCENARIO")
        cfg = base.copy()
        cfg.set('eval.scenario', scenario)
        if scenario == 'identity':
            cfg.set('eval.max_rotation', 0.0)
            cfg.set('eval.max_translation', 0.0)
            cfg.set('signal.noise_sigma', 0.0)
            cfg.set('scan.corner_noise_mm', 0.0)
            cfg.set('eval.label_source', 'ground_truth')
        elif scenario == 'leave_one_out':
            if int(cfg.get('eval.leave_out_line', -1)) < 0:
                cfg.set('eval.leave_out_line', 3)
        elif scenario == 'domain_shift':
            if float(cfg.get('eval.contrast_scale', 1.0)) == 1.0:
                cfg.set('eval.contrast_scale', 0.5)
        return cfg

    def _cached(self, prefix: str, settings: Dict[str, Any], factory):
        return self.cache.get_or_compute(f"{prefix}:{config_hash(settings)}", factory)

    def template_assets(self, cfg: Config) -> Dict[str, Any]:
        """模板空间资源：体模、模板点云、目标规划路径、肋间隙路径、目标真值"""
        def build():
            spec = RibCageSpec.from_config(cfg.phantom_settings)
            phantom = build_phantom(spec)
            template_pc = sample_template_pc(phantom, float(cfg.get('pointcloud.template_density', 1.0)))
            builder = TactilePointCloudBuilder(cfg.pointcloud_settings)
            transfer = PathTransfer(phantom, cfg.transfer_settings)
            assets = {
                'phantom': phantom,
                'template_pc': template_pc,
                'template_flat': builder.prepare_template(template_pc),
                'gap_paths': transfer.intercostal_paths(),
                'target_gt': None,
                'target_path': None,
            }
            if phantom.has_target:
                centroids = transfer.extract_centroids(acoustic_shadow=False)
                assets['target_path'] = transfer.plan_path(centroids)
                assets['target_gt'] = sample_target_gt(phantom, float(cfg.get('transfer.target_gt_spacing', 0.5)))
            return assets
        keys = {'phantom': cfg.phantom_settings, 'pc': cfg.pointcloud_settings, 'tr': cfg.transfer_settings}
        return self._cached('template', keys, build)

    def network(self, cfg: Config) -> Tuple[Optional[BoneClassifier], Dict[str, float]]:
        """训练（或从缓存读取）分类网络，并在留出扫描线上评估"""
        if cfg.get('eval.label_source', 'network') != 'network':
            return None, {}
        cls_settings = cfg.classifier_settings
        contrast = float(cfg.get('eval.contrast_scale', 1.0))

        def train_network():
            spec = RibCageSpec.from_config(cfg.phantom_settings)
            ctrl = ControllerParams.from_config(cfg.controller_settings)
            train_set = generate_training_scans(spec, int(cls_settings.get('train_lines', 60)),
                                                seed=int(cls_settings.get('seed', 11)), ctrl=ctrl)
            classifier = BoneClassifier(arch=NetworkArch.from_config(cls_settings),
                                        threshold=float(cls_settings.get('bone_threshold', 0.9)))
            classifier.fit(train_set, TrainConfig.from_config(cls_settings))
            return classifier

        keys = {'phantom': cfg.phantom_settings, 'cls': cls_settings, 'ctrl': cfg.controller_settings,
                'signal': cfg.signal_settings}
        classifier = self._cached('network', keys, train_network)

        spec = RibCageSpec.from_config(cfg.phantom_settings)
        test_set = generate_training_scans(spec, int(cls_settings.get('test_lines', 10)),
                                           seed=int(cls_settings.get('seed', 11)) + 1000, contrast_scale=contrast,
                                           ctrl=ControllerParams.from_config(cfg.controller_settings))
        spacing = float(cfg.get('signal.resample_spacing', 0.5))
        rows = []
        for window, pred in zip(test_set, classifier.segment_windows(test_set)):
            step = (window.end_s - window.start_s) / max(len(window) - 1, 1)
            rows.append(detection_metrics(pred, window.labels, step or spacing))
        stats = summarize_detection(rows)
        logger.info(f"留出扫描线分类: 准确率 {stats['accuracy_mean']:.2f} ± {stats['accuracy_sd']:.2f}%, "
                    f"质心偏移 {stats['shift_mean']:.2f} ± {stats['shift_sd']:.2f} mm")
        return classifier, stats

    # ---- 单次试验 ----

    @staticmethod
    @contextmanager
    def _stage(name: str):
        try:
            yield
        except StageException:
            raise
        except Exception as e:
            raise StageException(name, e) from e

    @staticmethod
    def sample_displacement(seed: int, trial: int, max_rotation: float, max_translation: float) -> RigidTransform:
        rng = np.random.default_rng([int(seed), int(trial)])
        return RigidTransform(rng.uniform(-max_rotation, max_rotation),
                              rng.uniform(-max_translation, max_translation),
                              rng.uniform(-max_translation, max_translation))

    def _classify_scan(self, sim: TactileSimulator, path: ScanPath3D, seed: int, pose: RigidTransform,
                       classifier: Optional[BoneClassifier]):
        """仿真、预处理并分类一条扫描线，返回带预测标签的轨迹和检测指标"""
        trace, windows = sim.scan_to_windows(path, seed=seed, pose=pose)
        window = windows[0]
        if classifier is None:
            return trace, None
        pred = segment(forward(window.values, classifier.params), classifier.threshold)
        step = (window.end_s - window.start_s) / max(len(window) - 1, 1)
        metrics = detection_metrics(pred, window.labels, step)
        n = len(window)
        idx = np.rint((trace.arc_s - window.start_s) / (window.end_s - window.start_s) * (n - 1))
        idx = np.clip(idx, 0, n - 1).astype(np.int64)
        return trace.with_labels(transition_labels(is_bone_like(pred)[idx])), metrics

    @staticmethod
    def _unflatten_xy(xy: np.ndarray, plane: Plane) -> np.ndarray:
        """展平坐标 → 世界坐标 (x, y)"""
        e1, e2 = plane.basis()
        pts = plane.origin + xy[:, :1] * e1 + xy[:, 1:2] * e2
        return pts[:, :2]

    def _transfer(self, path: ScanPath3D, T_est: RigidTransform, plane: Plane) -> np.ndarray:
        flat = T_est.apply_xy(path.waypoints[:, :2])
        return self._unflatten_xy(flat, plane)

    def run_trial(self, cfg: Config, trial: int, classifier: Optional[BoneClassifier] = None,
                  out_dir: Optional[str] = None) -> Dict[str, Any]:
        """执行一次完整试验"""
        watch = Stopwatch()
        seed = int(cfg.get('eval.seed', 2024))
        ev = cfg.eval_settings
        assets = self.template_assets(cfg)
        template_phantom = assets['phantom']

        with self._stage('phantom'):
            T_gt = self.sample_displacement(seed, trial, float(ev.get('max_rotation', 15.0)),
                                            float(ev.get('max_translation', 30.0)))
            spec = contrast_scaled_spec(RibCageSpec.from_config(cfg.phantom_settings),
                                        float(ev.get('contrast_scale', 1.0)))
            phantom = template_phantom if spec == template_phantom.spec else self._cached(
                'phantom', {'spec': spec.__dict__}, lambda: build_phantom(spec))
            sim = TactileSimulator(phantom, ControllerParams.from_config(cfg.controller_settings),
                                   cfg.signal_settings)

        with self._stage('scanplan'):
            planner = ScanPlanner(cfg.scan_settings)
            template = default_template(cfg.get('scan.corner_pixels'), cfg.get('scan.parallel_fractions'),
                                        cfg.get('scan.orthogonal_fractions'))
            corners_local = np.asarray(cfg.get('scan.corners_mm'), dtype=float).reshape(-1, 2)
            corner_rng = np.random.default_rng([seed, trial, 1])
            corner_noise = float(cfg.get('scan.corner_noise_mm', 0.0))
            corners_world = T_gt.apply_xy(corners_local)
            if corner_noise > 0:
                corners_world = corners_world + corner_rng.normal(0.0, corner_noise, corners_world.shape)
            z = phantom.height(corners_local[:, 0], corners_local[:, 1])
            plane, _, paths = planner.plan_from_corners(template, np.column_stack([corners_world, z]),
                                                        phantom, pose=T_gt)
            leave_out = int(ev.get('leave_out_line', -1))
            parallel_paths = [p for p in paths if p.path_id.startswith('P') and p.path_id != f"P{leave_out}"]

        with self._stage('classify'):
            parallel, metrics = [], []
            for path in parallel_paths:
                trace, m = self._classify_scan(sim, path, seed + trial, T_gt, classifier)
                parallel.append(trace)
                if m is not None:
                    metrics.append(m)
            sternum_paths = planner.derive_sternum_paths(parallel, plane, 3)
            sternum = []
            for path in sternum_paths:
                trace, m = self._classify_scan(sim, path, seed + trial, T_gt, classifier)
                sternum.append(trace)
                if m is not None:
                    metrics.append(m)

        with self._stage('cluster'):
            builder = TactilePointCloudBuilder(cfg.pointcloud_settings)
            clusters, dense, tactile_flat = builder.build(parallel, sternum, plane)

        with self._stage('register'):
            result = cpd_rigid(tactile_flat, assets['template_flat'], CpdConfig.from_config(cfg.registration_settings))
            T_est = result.transform.invert()
            pivot = assets['template_pc'].centroid[:2] if len(assets['template_pc']) else None
            reg = registration_error(T_est, T_gt, pivot)

        with self._stage('transfer'):
            path_mnnd, path_hd = [], []
            moved_paths, truth_paths = [], []
            for gap_path in assets['gap_paths']:
                moved = self._transfer(gap_path, T_est, plane)
                truth = T_gt.apply_xy(gap_path.waypoints[:, :2])
                moved_paths.append(moved)
                truth_paths.append(truth)
                path_mnnd.append(mnnd(moved, truth))
                path_hd.append(hausdorff(moved, truth))
            target_path_mnnd = float('nan')
            target_world = None
            if assets['target_path'] is not None:
                moved = self._transfer(assets['target_path'], T_est, plane)
                target_path_mnnd = mnnd(moved, T_gt.apply_xy(assets['target_path'].waypoints[:, :2]))
                target_world = assets['target_path'].replace(np.column_stack([moved, np.zeros(len(moved))]))

        recon_mnnd = recon_hd = coverage = float('nan')
        recon = None
        if target_world is not None:
            with self._stage('reconstruct'):
                transfer = PathTransfer(phantom, cfg.transfer_settings)
                recon = transfer.scan_target(target_world, pose=T_gt, seed=seed + trial)
                gt = T_gt.apply_points(assets['target_gt'].points)
                recon_mnnd = mnnd(recon.points, gt)
                recon_hd = hausdorff(recon.points, gt)
                coverage = recon.coverage_fraction

        if out_dir and bool(ev.get('dump_figures', False)):
            self._dump_trial(out_dir, trial, dense, tactile_flat, recon)
            figures = PipelineVisualizer().create_trial_figures(assets['template_flat'], tactile_flat, result.transform,
                                                                moved_paths, truth_paths, parallel)
            save_figures(figures, os.path.join(out_dir, 'figures'), prefix=f"trial{trial}_")

        defined = [m for m in metrics if m['accuracy_defined']]
        shifts = [m['centroid_shift'] for m in metrics if np.isfinite(m['centroid_shift'])]
        return {
            'trial': trial,
            'scenario': ev.get('scenario', 'default'),
            'accuracy': float(np.mean([m['accuracy'] for m in defined])) if defined else float('nan'),
            'accuracy_defined': bool(defined) or classifier is None,
            'centroid_shift': float(np.mean(shifts)) if shifts else float('nan'),
            'reg_dist': reg['dist'],
            'reg_ang': reg['ang'],
            'path_mnnd': float(np.mean(path_mnnd)) if path_mnnd else float('nan'),
            'path_hd': float(np.mean(path_hd)) if path_hd else float('nan'),
            'target_path_mnnd': target_path_mnnd,
            'recon_mnnd': recon_mnnd,
            'recon_hd': recon_hd,
            'coverage': coverage,
            'runtime': watch.elapsed(),
            'cpd_iterations': result.iterations,
            'gt_angle_deg': T_gt.angle_deg,
            'gt_tx_mm': T_gt.tx,
            'gt_ty_mm': T_gt.ty,
        }

    @staticmethod
    def _dump_trial(out_dir: str, trial: int, dense: PointCloud, flat: PointCloud, recon) -> None:
        from tactile_io import write_point_cloud
        write_point_cloud(dense, os.path.join(out_dir, 'figures', f"trial{trial}_tactile_dense.csv"))
        write_point_cloud(flat, os.path.join(out_dir, 'figures', f"trial{trial}_tactile_flat.csv"))
        if recon is not None:
            write_point_cloud(recon.points, os.path.join(out_dir, 'figures', f"trial{trial}_target_recon.csv"))

    # ---- 实验 ----

    def run_experiment(self, scenario: Optional[str] = None, trials: Optional[int] = None,
                       seed: Optional[int] = None, out_dir: Optional[str] = None) -> EvalReport:
        """
        运行一个场景的多次试验

        Args:
            scenario: 场景名，默认取配置 eval.scenario
            trials: 试验次数
            seed: 随机种子
            out_dir: 输出目录（开启 eval.dump_figures 时写出逐次试验点云和图表）

        Returns:
            EvalReport: 同一场景与种子下结果逐位一致

        Raises:
            StageException: 任一阶段失败，携带阶段名
        """
        base = self.config.copy()
        if seed is not None:
            base.set('eval.seed', int(seed))
        scenario = scenario or base.get('eval.scenario', 'default')
        cfg = self.scenario_config(base, scenario)
        trials = int(cfg.get('eval.trials', 10) if trials is None else trials)
        if trials < 1:
            raise ValidationException("试验次数必须至少为1", error_code="INVALID_TRIALS")

        logger.info(f"开始评估: 场景 {scenario}, {trials}次试验, 种子 {cfg.get('eval.seed')}")
        with self._stage('train'):
            classifier, cls_stats = self.network(cfg)
        report = EvalReport(scenario, int(cfg.get('eval.seed')), classification=cls_stats,
                            config_snapshot=cfg.snapshot())
        for t in range(trials):
            report.rows.append(self.run_trial(cfg, t, classifier, out_dir))
            row = report.rows[-1]
            progress_callback(t + 1, trials, f"配准误差 {row['reg_dist']:.2f} mm / {row['reg_ang']:.3f}°")
        logger.info(f"评估完成: 平均配准误差 {report.summary['reg_dist_mean']:.2f} mm, "
                    f"{report.summary['reg_ang_mean']:.3f}°")
        return report

    def leave_one_out_ratio(self, trials: Optional[int] = None, seed: Optional[int] = None) -> Dict[str, float]:
        """去掉一条扫描线后配准误差相对完整扫描的倍数"""
        full = self.run_experiment('default', trials, seed).summary
        reduced = self.run_experiment('leave_one_out', trials, seed).summary
        ratio = {}
        for metric in ('reg_dist', 'reg_ang'):
            base = full[f"{metric}_mean"]
            ratio[metric] = reduced[f"{metric}_mean"] / base if base > 0 else float('nan')
        return ratio


# 便捷函数
def run_experiment(scenario: str = 'default', trials: Optional[int] = None, seed: Optional[int] = None,
                   cfg: Optional[Config] = None, out_dir: Optional[str] = None) -> EvalReport:
    """便捷函数：运行评估场景"""
    return PipelineEvaluator(cfg).run_experiment(scenario, trials, seed, out_dir)
