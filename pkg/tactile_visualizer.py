# -*- coding: utf-8 -*-
"""
流水线可视化模块
扫描轨迹、配准叠加、路径迁移、训练曲线、超声切片和评估指标分布的静态图
"""

import os
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from tactile_phantom import PointCloud, bone_runs, is_bone_like
from tactile_pathtransfer import SliceGeometry

logger = logging.getLogger(__name__)


class PipelineVisualizer:
    """流水线结果可视化器"""

    def __init__(self):
        # 设置中文字体
        plt.rcParams['font.sans-serif'] = ['SimHei', 'Microsoft YaHei', 'DejaVu Sans']
        plt.rcParams['axes.unicode_minus'] = False

        self.colors = {
            'template': '#00A6D6',
            'tactile': '#FF6B9D',
            'truth': '#4CAF50',
            'transferred': '#FF9800',
            'bone': '#F44336',
            'dark': '#333333'
        }
        sns.set_style("whitegrid")

    def plot_scan_trace(self, trace, title: Optional[str] = None) -> plt.Figure:
        """
        绘制一条扫描线的压入深度变化，骨区加阴影

        Args:
            trace: TactileTrace
            title: 图标题，默认使用路径编号
        """
        fig, ax = plt.subplots(figsize=(10, 4))
        ax.plot(trace.arc_s, trace.dz, color=self.colors['dark'], linewidth=1.0, label='Δz')
        for start, end in bone_runs(is_bone_like(trace.labels)):
            ax.axvspan(trace.arc_s[start], trace.arc_s[end], color=self.colors['bone'], alpha=0.2)
        ax.set_xlabel('弧长 (mm)')
        ax.set_ylabel('Δz (mm)')
        ax.set_title(title or f"扫描线 {trace.path_id}")
        ax.legend(loc='upper right')
        fig.tight_layout()
        return fig

    def plot_registration(self, template: PointCloud, tactile: PointCloud, transform=None) -> plt.Figure:
        """模板点云与（配准后的）触觉点云叠加"""
        fig, ax = plt.subplots(figsize=(7, 7))
        ax.scatter(template.points[:, 0], template.points[:, 1], s=2, color=self.colors['template'],
                   label=f'模板 ({len(template)})')
        moved = tactile.points[:, :2] if transform is None else transform.apply_xy(tactile.points[:, :2])
        ax.scatter(moved[:, 0], moved[:, 1], s=4, color=self.colors['tactile'], label=f'触觉 ({len(tactile)})')
        if transform is not None:
            ax.set_title(f"配准结果: {transform.angle_deg:.2f}°, ({transform.tx:.1f}, {transform.ty:.1f}) mm")
        ax.set_aspect('equal')
        ax.set_xlabel('x (mm)')
        ax.set_ylabel('y (mm)')
        ax.legend(loc='upper right')
        fig.tight_layout()
        return fig

    def plot_paths(self, transferred: Sequence[np.ndarray], truth: Sequence[np.ndarray],
                   labels: Optional[Sequence[str]] = None) -> plt.Figure:
        """迁移路径与真值路径对比（xy 平面）"""
        fig, ax = plt.subplots(figsize=(7, 7))
        for i, (moved, gt) in enumerate(zip(transferred, truth)):
            name = labels[i] if labels else f"G{i}"
            ax.plot(gt[:, 0], gt[:, 1], color=self.colors['truth'], linewidth=2.0,
                    label='真值' if i == 0 else None)
            ax.plot(moved[:, 0], moved[:, 1], '--', color=self.colors['transferred'], linewidth=1.5,
                    label='迁移' if i == 0 else None)
            ax.annotate(name, gt[0, :2], fontsize=8)
        ax.set_aspect('equal')
        ax.set_xlabel('x (mm)')
        ax.set_ylabel('y (mm)')
        ax.legend(loc='upper right')
        fig.tight_layout()
        return fig

    def plot_training_curve(self, history: Sequence[Tuple[int, float, float]]) -> plt.Figure:
        """训练损失与帧准确率"""
        df = pd.DataFrame(list(history), columns=['epoch', 'loss', 'accuracy'])
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot(df['epoch'], df['loss'], color=self.colors['template'], label='损失')
        ax.set_xlabel('轮次')
        ax.set_ylabel('交叉熵')
        twin = ax.twinx()
        twin.plot(df['epoch'], df['accuracy'], color=self.colors['tactile'], label='帧准确率')
        twin.set_ylabel('准确率 (%)')
        twin.grid(False)
        fig.legend(loc='upper right')
        fig.tight_layout()
        return fig

    def plot_slice(self, image, segmentation=None, geometry: Optional[SliceGeometry] = None) -> plt.Figure:
        """合成超声切片，叠加目标分割轮廓"""
        geometry = geometry or SliceGeometry()
        half = geometry.n_cols * geometry.pixel_size / 2.0
        extent = (-half, half, geometry.n_rows * geometry.pixel_size, 0.0)
        fig, ax = plt.subplots(figsize=(5, 7))
        ax.imshow(image.intensity, cmap='gray', vmin=0.0, vmax=1.0, extent=extent, aspect='equal')
        if segmentation is not None and segmentation.has_target:
            ax.contour(geometry.col_offsets, geometry.row_depths, segmentation.mask.astype(float),
                       levels=[0.5], colors=[self.colors['transferred']])
        ax.set_title(f"切片 {image.pose.index}, 倾角 {image.pose.tilt_deg:.1f}°")
        ax.set_xlabel('横向 (mm)')
        ax.set_ylabel('深度 (mm)')
        fig.tight_layout()
        return fig

    def plot_metric_distribution(self, report_frame: pd.DataFrame,
                                 metrics: Sequence[str] = ('reg_dist', 'path_mnnd', 'recon_mnnd')) -> plt.Figure:
        """各场景逐次试验指标的箱线图"""
        present = [m for m in metrics if m in report_frame]
        long = report_frame.melt(id_vars=['scenario'], value_vars=present, var_name='metric', value_name='mm')
        fig, ax = plt.subplots(figsize=(8, 4))
        sns.boxplot(data=long.dropna(), x='metric', y='mm', hue='scenario', ax=ax)
        ax.set_xlabel('')
        ax.set_ylabel('误差 (mm)')
        fig.tight_layout()
        return fig

    def create_trial_figures(self, template: PointCloud, tactile: PointCloud, transform,
                             transferred: Sequence[np.ndarray], truth: Sequence[np.ndarray],
                             traces: Sequence = ()) -> Dict[str, plt.Figure]:
        """
        单次试验的全部图表

        Returns:
            Dict[str, plt.Figure]: 图名 → 图
        """
        figures = {
            'registration': self.plot_registration(template, tactile, transform),
            'paths': self.plot_paths(transferred, truth),
        }
        for trace in traces:
            figures[f"trace_{trace.path_id}"] = self.plot_scan_trace(trace)
        return figures


def save_figure(fig: plt.Figure, path: str, dpi: int = 120) -> str:
    """保存为 PNG 并关闭图"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format='png', dpi=dpi, bbox_inches='tight')
    plt.close(fig)
    logger.debug(f"图已保存: {path}")
    return path


# 便捷函数
def save_figures(figures: Dict[str, plt.Figure], out_dir: str, prefix: str = "") -> List[str]:
    """便捷函数：批量保存图表"""
    return [save_figure(fig, os.path.join(out_dir, f"{prefix}{name}.png")) for name, fig in figures.items()]
