"""
触觉引导肋间超声路径规划 - 命令行入口
"""

import os
import sys
import argparse
import logging
import traceback
from typing import List, Optional

import numpy as np
import pandas as pd

from config import Config, PipelineException, StageException, ValidationException
from validator import validator
from utils import Stopwatch
from tactile_phantom import RibCageSpec, build_phantom, sample_template_pc, sample_target_gt
from tactile_scanplan import ScanPlanner, default_template
from tactile_simulator import ControllerParams, TactileSimulator, generate_training_scans
from tactile_classifier import BoneClassifier, NetworkArch, TrainConfig, forward, segment, detection_metrics, \
    summarize_detection
from tactile_pointcloud import TactilePointCloudBuilder, cluster_summary
from tactile_registration import CpdConfig, RigidTransform, cpd_rigid
from tactile_pathtransfer import PathTransfer
from tactile_evaluator import PipelineEvaluator, SCENARIOS, METRICS
from tactile_visualizer import PipelineVisualizer, save_figure
import tactile_io

logger = logging.getLogger(__name__)


def _load_config(args) -> Config:
    cfg = Config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg.set('eval.seed', int(args.seed))
    return cfg


def _spec(cfg: Config, args) -> RibCageSpec:
    if getattr(args, 'spec', None):
        return tactile_io.read_phantom_spec(args.spec)
    return RibCageSpec.from_config(cfg.phantom_settings)


def _out(args, name: str) -> str:
    return os.path.join(args.out, name)


def _parse_pose(text: Optional[str]) -> Optional[RigidTransform]:
    """"angle,tx,ty" → RigidTransform"""
    if not text:
        return None
    parts = [p for p in text.split(',') if p.strip()]
    if len(parts) != 3:
        raise ValidationException(f"位姿格式应为 angle,tx,ty: {text}", error_code="BAD_POSE")
    angle, tx, ty = (validator.validate_number_input(p, field_name="位姿") for p in parts)
    return RigidTransform(angle, tx, ty)


# ---- 子命令 ----

def cmd_phantom(cfg: Config, args) -> int:
    """生成体模：规格、模板点云、目标真值、肋间隙路径"""
    spec = _spec(cfg, args)
    phantom = build_phantom(spec)
    template = sample_template_pc(phantom, float(cfg.get('pointcloud.template_density', 1.0)))
    tactile_io.write_key_values({f"phantom.{k}": v for k, v in spec.__dict__.items()}, _out(args, 'phantom_spec.txt'))
    tactile_io.write_point_cloud(template, _out(args, 'template_pc.csv'))
    transfer = PathTransfer(phantom, cfg.transfer_settings)
    tactile_io.write_paths(transfer.intercostal_paths(), _out(args, 'gap_paths.csv'))
    if phantom.has_target:
        tactile_io.write_point_cloud(sample_target_gt(phantom, float(cfg.get('transfer.target_gt_spacing', 0.5))),
                                     _out(args, 'target_gt.csv'))
    print(f"✅ 体模已生成: {len(phantom.rib_centers)}根肋骨, 模板点云{len(template)}个点 → {args.out}")
    return 0


def cmd_simulate(cfg: Config, args) -> int:
    """规划平行扫描线并仿真，再由真值标签推导跨胸骨扫描线"""
    phantom = build_phantom(_spec(cfg, args))
    pose = _parse_pose(args.pose) or RigidTransform.identity()
    planner = ScanPlanner(cfg.scan_settings)
    sim = TactileSimulator(phantom, ControllerParams.from_config(cfg.controller_settings), cfg.signal_settings)
    seed = int(cfg.get('eval.seed', 2024))

    if args.template:
        template = tactile_io.read_template(args.template)
    else:
        template = default_template(cfg.get('scan.corner_pixels'), cfg.get('scan.parallel_fractions'),
                                    cfg.get('scan.orthogonal_fractions'))
    corners = np.asarray(cfg.get('scan.corners_mm'), dtype=float).reshape(-1, 2)
    z = phantom.height(corners[:, 0], corners[:, 1])
    plane, _, paths = planner.plan_from_corners(template, np.column_stack([pose.apply_xy(corners), z]),
                                                phantom, pose=pose)
    parallel = [sim.preprocess(sim.simulate_scan(p, seed=seed, pose=pose)) for p in paths if p.path_id.startswith('P')]
    sternum_paths = planner.derive_sternum_paths(parallel, plane, 3)
    sternum = [sim.preprocess(sim.simulate_scan(p, seed=seed, pose=pose)) for p in sternum_paths]
    traces = parallel + sternum

    tactile_io.write_paths(paths + sternum_paths, _out(args, 'paths.csv'))
    tactile_io.write_traces(traces, _out(args, 'traces.csv'))
    tactile_io.write_windows([w for t in traces for w in sim.windows(t)], _out(args, 'windows.twin'))
    print(f"✅ 仿真完成: {len(parallel)}条平行线, {len(sternum)}条跨胸骨线 → {args.out}")
    return 0


def cmd_train(cfg: Config, args) -> int:
    """训练骨/间隙分类网络"""
    cls_settings = cfg.classifier_settings
    length = int(cfg.get('signal.window_length', 400))
    if args.windows:
        windows = tactile_io.read_windows(args.windows, length)
    else:
        windows = generate_training_scans(_spec(cfg, args), ctrl=ControllerParams.from_config(cfg.controller_settings))
    classifier = BoneClassifier(arch=NetworkArch.from_config(cls_settings),
                                threshold=float(cls_settings.get('bone_threshold', 0.9)))
    watch = Stopwatch()
    params = classifier.fit(windows, TrainConfig.from_config(cls_settings))
    tactile_io.write_network(params, _out(args, 'network.tnet'))
    tactile_io.write_training_log(params.history, _out(args, 'training_log.csv'))
    if args.figures:
        save_figure(PipelineVisualizer().plot_training_curve(params.history), _out(args, 'training_curve.png'))
    epoch, loss, acc = params.history[-1]
    print(f"✅ 训练完成: {epoch}轮, 损失 {loss:.4f}, 帧准确率 {acc:.2f}%, 耗时 {watch.elapsed():.1f}s")
    return 0


def cmd_segment(cfg: Config, args) -> int:
    """用网络分割轨迹，标签写回轨迹 CSV"""
    from tactile_phantom import is_bone_like, transition_labels
    params = tactile_io.read_network(args.network)
    threshold = float(cfg.get('classifier.bone_threshold', 0.9))
    length = int(cfg.get('signal.window_length', 400))
    traces = tactile_io.read_traces(args.traces)
    segmented, rows = [], []
    for trace in traces:
        window = TactileSimulator.make_windows(trace, length, int(cfg.get('signal.min_window_samples', 16)))[0]
        pred = segment(forward(window.values, params), threshold)
        step = (window.end_s - window.start_s) / max(len(window) - 1, 1)
        rows.append(detection_metrics(pred, window.labels, step))
        idx = np.rint((trace.arc_s - window.start_s) / max(window.end_s - window.start_s, 1e-12) * (length - 1))
        idx = np.clip(idx, 0, length - 1).astype(np.int64)
        segmented.append(trace.with_labels(transition_labels(is_bone_like(pred)[idx])))
    tactile_io.write_traces(segmented, _out(args, 'segmented_traces.csv'))
    stats = summarize_detection(rows)
    print(f"✅ 分割完成: {len(segmented)}条轨迹, 准确率 {stats['accuracy_mean']:.2f} ± {stats['accuracy_sd']:.2f}%, "
          f"质心偏移 {stats['shift_mean']:.2f} ± {stats['shift_sd']:.2f} mm")
    return 0


def cmd_cluster(cfg: Config, args) -> int:
    """聚类并构建触觉点云"""
    traces = tactile_io.read_traces(args.traces)
    parallel = [t for t in traces if t.path_id.startswith('P')]
    sternum = [t for t in traces if t.path_id.startswith('S')]
    builder = TactilePointCloudBuilder(cfg.pointcloud_settings)
    clusters, dense, flat = builder.build(parallel, sternum)
    tactile_io.write_point_cloud(dense, _out(args, 'tactile_dense.csv'))
    tactile_io.write_point_cloud(flat, _out(args, 'tactile_flat.csv'))
    summary = cluster_summary(clusters)
    print(f"✅ 点云构建完成: {summary}, 稠密点云{len(dense)}个点, 展平降采样后{len(flat)}个点")
    return 0


def cmd_register(cfg: Config, args) -> int:
    """CPD 刚体配准：触觉点云（移动）→ 模板点云（数据）"""
    source = tactile_io.read_point_cloud(args.source)
    builder = TactilePointCloudBuilder(cfg.pointcloud_settings)
    if args.template:
        template = tactile_io.read_point_cloud(args.template)
    else:
        phantom = build_phantom(_spec(cfg, args))
        template = sample_template_pc(phantom, float(cfg.get('pointcloud.template_density', 1.0)))
    result = cpd_rigid(source, builder.prepare_template(template), CpdConfig.from_config(cfg.registration_settings))
    estimate = result.transform.invert()
    tactile_io.write_transform(result, _out(args, 'transform_reg.txt'))
    tactile_io.write_key_values({'angle_deg': repr(estimate.angle_deg), 'tx_mm': repr(estimate.tx),
                                 'ty_mm': repr(estimate.ty)}, _out(args, 'transform.txt'))
    print(f"✅ 配准完成: 模板→触觉 旋转 {estimate.angle_deg:.3f}°, 平移 ({estimate.tx:.2f}, {estimate.ty:.2f}) mm, "
          f"{result.iterations}次迭代")
    return 0


def cmd_transfer(cfg: Config, args) -> int:
    """把模板空间路径迁移到当前体模位姿，可选地沿目标路径扫描并重建"""
    phantom = build_phantom(_spec(cfg, args))
    transfer = PathTransfer(phantom, cfg.transfer_settings)
    T = tactile_io.read_transform(args.transform)
    if args.paths:
        paths = tactile_io.read_paths(args.paths)
    else:
        paths = transfer.intercostal_paths()
        if phantom.has_target:
            paths.append(transfer.plan_path(transfer.extract_centroids()))
    moved = [transfer.transfer_path(p, T) for p in paths]
    tactile_io.write_paths(moved, _out(args, 'transferred_paths.csv'))
    print(f"✅ 已迁移{len(moved)}条路径")

    target = [p for p in moved if p.path_id == 'target']
    if args.reconstruct and target:
        pose = _parse_pose(args.pose) or T
        result = transfer.scan_target(target[0], pose=pose, seed=int(cfg.get('eval.seed', 2024)))
        tactile_io.write_point_cloud(result.points, _out(args, 'target_recon.csv'))
        print(f"✅ 目标重建: {len(result.points)}个表面点, 覆盖率 {result.coverage_fraction:.1%}")
    return 0


def cmd_evaluate(cfg: Config, args) -> int:
    """运行评估场景并写出报告"""
    if args.figures:
        cfg.set('eval.dump_figures', True)
    evaluator = PipelineEvaluator(cfg)
    report = evaluator.run_experiment(args.scenario, args.trials, args.seed, args.out)
    files = tactile_io.write_report(report, args.out)
    if args.figures:
        save_figure(PipelineVisualizer().plot_metric_distribution(report.to_frame()),
                    _out(args, 'metric_distribution.png'))
    _print_summary(report.summary)
    print(f"✅ 报告已写出: {files['rows']}")
    return 0


def cmd_report(cfg: Config, args) -> int:
    """由 report.csv 重新汇总并打印"""
    path = os.path.join(args.input or args.out, 'report.csv')
    validator.validate_file_path(path, ['.csv'])
    df = pd.read_csv(path)
    summary = {'trials': len(df)}
    for metric in METRICS:
        if metric in df:
            values = pd.to_numeric(df[metric], errors='coerce').dropna()
            summary[f"{metric}_mean"] = float(values.mean()) if len(values) else float('nan')
            summary[f"{metric}_sd"] = float(values.std(ddof=0)) if len(values) else float('nan')
    if args.figures and 'scenario' in df:
        save_figure(PipelineVisualizer().plot_metric_distribution(df), _out(args, 'metric_distribution.png'))
    _print_summary(summary)
    return 0


def _print_summary(summary) -> None:
    print("📊 评估汇总")
    for metric in METRICS:
        if f"{metric}_mean" in summary:
            print(f"  {metric:<18} {summary[f'{metric}_mean']:10.4f} ± {summary[f'{metric}_sd']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='tactile-planner', description='触觉引导的肋间超声扫描路径规划')
    parser.add_argument('--config', help='配置文件（JSON 或 key=value）')
    parser.add_argument('--seed', type=int, help='随机种子，覆盖 eval.seed')
    parser.add_argument('--out', default='output', help='输出目录')
    parser.add_argument('--figures', action='store_true', help='同时输出 PNG 图表')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('phantom', help='体模')
    p.add_argument('action', choices=['gen'])
    p.add_argument('--spec', help='key=value 体模规格文件')
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser('simulate', help='规划并仿真触觉扫描')
    p.add_argument('--spec')
    p.add_argument('--template', help='模板 CSV')
    p.add_argument('--pose', help='体模位姿 angle,tx,ty')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('train', help='训练分类网络')
    p.add_argument('--spec')
    p.add_argument('--windows', help='TWIN 训练窗口文件，缺省时自动生成')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('segment', help='分割轨迹')
    p.add_argument('--traces', required=True)
    p.add_argument('--network', required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser('cluster', help='构建触觉点云')
    p.add_argument('--traces', required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser('register', help='CPD 配准')
    p.add_argument('--source', required=True, help='展平后的触觉点云 CSV')
    p.add_argument('--template', help='模板点云 CSV，缺省时由体模采样')
    p.add_argument('--spec')
    p.set_defaults(func=cmd_register)

    p = sub.add_parser('transfer', help='路径迁移与目标重建')
    p.add_argument('--transform', required=True)
    p.add_argument('--paths', help='模板空间路径 CSV')
    p.add_argument('--spec')
    p.add_argument('--reconstruct', action='store_true')
    p.add_argument('--pose', help='体模真实位姿 angle,tx,ty，缺省时取估计变换')
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser('evaluate', help='运行评估场景')
    p.add_argument('--scenario', choices=SCENARIOS, default=None)
    p.add_argument('--trials', type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('report', help='汇总评估报告')
    p.add_argument('--input', help='包含 report.csv 的目录，缺省为 --out')
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        os.makedirs(args.out, exist_ok=True)
        return args.func(cfg, args)
    except StageException as e:
        logger.error(f"阶段 {e.stage} 失败: {validator.sanitize_error_message(str(e))}")
        print(f"❌ 阶段 {e.stage} 失败 [{e.error_code}]: {e}")
        return 2
    except PipelineException as e:
        logger.error(validator.sanitize_error_message(str(e)))
        print(f"❌ [{e.error_code}] {e}")
        return 1
    except Exception as e:
        logger.error(f"未预期的错误: {e}")
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
