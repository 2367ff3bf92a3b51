# -*- coding: utf-8 -*-
"""
配置文件管理模块
管理触觉路径规划流水线的所有配置项，包括体模参数、控制器参数、网络结构、配准与评估参数等
"""

import os
import json
import copy
from typing import Dict, Any, Optional


class Config:
    """流水线配置管理类"""

    def __init__(self, config_file: Optional[str] = None):
        """
        初始化配置

        Args:
            config_file: 配置文件路径（JSON 或 key=value 文本），为空时只使用默认配置
        """
        self.config_file = config_file
        self._config = self._load_default_config()
        if config_file:
            self._load_config_file()

    def _load_default_config(self) -> Dict[str, Any]:
        """加载默认配置"""
        return {
            "phantom": {
                "rib_count": 4,
                "rib_width": 12.0,           # mm
                "gap_width": 30.0,           # mm，平均肋间隙约30mm
                "rib_length": 70.0,          # mm，胸骨边缘到肋骨末端
                "sternum_width": 24.0,       # mm
                "skin_thickness": 7.0,       # mm，厚皮肤体模取10mm
                "bone_thickness": 5.0,       # mm
                "bone_stiffness": 10.0,      # N/mm
                "tissue_stiffness": 1.0,     # N/mm
                "rib_axis_angle": 90.0,      # 度，肋骨相对胸骨中线的夹角
                "target_depth": 35.0,        # mm，目标中心距皮肤表面深度
                "target_extent": [16.0, 64.0, 10.0],  # mm，目标包围盒
                "target_center": [47.0, 21.0],        # mm，目标中心 (x, y)
                "undulation_amplitude": 1.5, # mm，表面起伏幅值
                "undulation_wavelength": 120.0,  # mm，表面起伏波长（>25mm）
                "margin": 15.0,              # mm，体模外缘留白
                "grid_step": 1.0,            # mm，掩膜栅格步长
                "rng_seed": 7
            },
            "scan": {
                "corner_pixels": [[0, 0], [800, 0], [800, 800], [0, 800]],
                "corners_mm": [[-90.0, -90.0], [90.0, -90.0], [90.0, 90.0], [-90.0, 90.0]],
                "corner_noise_mm": 0.0,
                "parallel_fractions": [0.08, 0.16, 0.24, 0.32, 0.68, 0.76, 0.84, 0.92],
                "orthogonal_fractions": [0.35, 0.5, 0.65],
                "line_step": 1.0,            # mm，模板线采样步长
                "minima_neighborhood": 5,    # 局部极小值邻域样本数
                "minima_tolerance": 0.2      # mm，与最低值相差不超过该值视为并列
            },
            "controller": {
                "stiffness_axial": 1.0,      # N/m，沿探头中心线刚度
                "stiffness_lateral": 500.0,  # N/m
                "desired_force": 3.0,        # N
                "speed": 4.86,               # mm/s
                "sample_rate": 20.0          # Hz，跟踪数据采样率
            },
            "signal": {
                "noise_sigma": 0.1,          # mm
                "resample_spacing": 0.5,     # mm
                "cutoff_wavelength": 25.0,   # mm，约等于肋骨间距
                "filter_order": 2,
                "window_length": 400,
                "min_window_samples": 16
            },
            "classifier": {
                "conv_kernel": 7,
                "conv_channels": [8, 16],
                "gru_hidden": [32],
                "bone_threshold": 0.9,
                "class_weights": [1.0, 1.0, 4.0, 4.0],
                "learning_rate": 0.001,
                "batch_size": 8,
                "epochs": 60,
                "optimizer": "adam",
                "momentum": 0.9,
                "train_lines": 60,
                "test_lines": 10,
                "train_locations": 4,
                "orthogonal_fraction": 0.25, # 训练集中跨胸骨横向扫描线的比例
                "padding": "zero",
                "seed": 11
            },
            "pointcloud": {
                "template_density": 1.0,     # 点/mm²
                "dbscan_eps": 15.0,          # mm，默认为肋间隙的一半
                "dbscan_min_pts": 2,
                "interp_step": 1.0,          # mm
                "downsample_cell": 3.0       # mm
            },
            "registration": {
                "outlier_weight": 0.1,
                "max_iterations": 200,
                "tolerance": 1e-8,
                "min_sigma2": 1e-12,
                "sigma2_floor": 9.0          # mm²，降采样体素边长的平方，抑制体素格点效应
            },
            "transfer": {
                "slice_spacing": 1.0,        # mm
                "pixel_size": 0.067,         # mm/像素
                "image_width": 30.0,         # mm，线阵探头宽度
                "image_depth": 50.0,         # mm
                "l_adj": 10.0,               # mm，经验值
                "sweep_margin": 10.0,        # mm
                "slice_noise": 0.0,          # 强度噪声（相对对比度）
                "target_gt_spacing": 0.5,    # mm
                "fan_motion": True
            },
            "eval": {
                "seed": 2024,
                "trials": 10,
                "max_rotation": 15.0,        # 度
                "max_translation": 30.0,     # mm
                "scenario": "default",
                "label_source": "network",
                "leave_out_line": -1,
                "contrast_scale": 1.0,
                "dump_figures": False
            }
        }

    def _load_config_file(self):
        """从配置文件加载配置"""
        if not os.path.exists(self.config_file):
            raise ValidationException(f"配置文件不存在: {self.config_file}", error_code="CONFIG_NOT_FOUND")
        try:
            if self.config_file.endswith('.json'):
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    self._merge(self._config, json.load(f))
            else:
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    for key, value in parse_key_value_lines(f.read()).items():
                        self.set(key, value)
        except (json.JSONDecodeError, IOError) as e:
            raise ValidationException(f"加载配置文件失败: {e}", error_code="CONFIG_INVALID")

    def _merge(self, base: Dict[str, Any], update: Dict[str, Any]):
        """递归合并配置字典"""
        for key, value in update.items():
            if isinstance(value, dict) and isinstance(base.get(key), dict):
                self._merge(base[key], value)
            else:
                base[key] = value

    def save_config(self, path: Optional[str] = None):
        """保存配置到文件"""
        path = path or self.config_file
        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(self._config, f, ensure_ascii=False, indent=4)
        except IOError as e:
            raise ValidationException(f"保存配置文件失败: {e}", error_code="CONFIG_WRITE_FAILED")

    def get(self, key: str, default: Any = None) -> Any:
        """获取配置值"""
        keys = key.split('.')
        value = self._config
        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        """设置配置值"""
        keys = key.split('.')
        config = self._config
        for k in keys[:-1]:
            if k not in config:
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value

    def copy(self) -> "Config":
        """深拷贝配置，用于场景覆盖"""
        clone = Config()
        clone.config_file = self.config_file
        clone._config = copy.deepcopy(self._config)
        return clone

    def snapshot(self) -> Dict[str, Any]:
        """以扁平的点号键形式导出全部配置"""
        flat = {}

        def walk(prefix: str, node: Any):
            if isinstance(node, dict):
                for k, v in node.items():
                    walk(f"{prefix}.{k}" if prefix else k, v)
            else:
                flat[prefix] = node

        walk("", self._config)
        return flat

    @property
    def phantom_settings(self) -> Dict[str, Any]:
        """获取体模设置"""
        return self.get('phantom', {})

    @property
    def scan_settings(self) -> Dict[str, Any]:
        """获取扫描路径设置"""
        return self.get('scan', {})

    @property
    def controller_settings(self) -> Dict[str, Any]:
        """获取阻抗控制器设置"""
        return self.get('controller', {})

    @property
    def signal_settings(self) -> Dict[str, Any]:
        """获取信号预处理设置"""
        return self.get('signal', {})

    @property
    def classifier_settings(self) -> Dict[str, Any]:
        """获取分类网络设置"""
        return self.get('classifier', {})

    @property
    def pointcloud_settings(self) -> Dict[str, Any]:
        """获取点云设置"""
        return self.get('pointcloud', {})

    @property
    def registration_settings(self) -> Dict[str, Any]:
        """获取配准设置"""
        return self.get('registration', {})

    @property
    def transfer_settings(self) -> Dict[str, Any]:
        """获取路径迁移设置"""
        return self.get('transfer', {})

    @property
    def eval_settings(self) -> Dict[str, Any]:
        """获取评估设置"""
        return self.get('eval', {})


def parse_scalar(text: str) -> Any:
    """把 key=value 文本中的值解析为 bool / int / float / 列表 / 字符串"""
    text = text.strip()
    lowered = text.lower()
    if lowered in ('true', 'false'):
        return lowered == 'true'
    if ',' in text:
        return [parse_scalar(part) for part in text.split(',') if part.strip()]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_key_value_lines(text: str) -> Dict[str, Any]:
    """解析扁平的 key=value 文本，忽略空行和 # 注释"""
    result = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ValidationException(f"第{line_no}行缺少'=': {raw}", error_code="KV_SYNTAX")
        key, value = line.split('=', 1)
        result[key.strip()] = parse_scalar(value)
    return result


# 全局配置实例
config = Config()


class PipelineException(Exception):
    """流水线异常基类"""
    def __init__(self, message: str, error_code: Optional[str] = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class ValidationException(PipelineException):
    """参数验证异常"""
    pass


class DegenerateInputException(PipelineException):
    """退化输入异常（共线角点、秩亏、重合点云等）"""
    pass


class DomainException(PipelineException):
    """定义域异常"""
    pass


class ContactModelException(PipelineException):
    """接触模型异常"""
    pass


class InsufficientDataException(PipelineException):
    """数据不足异常"""
    pass


class ShapeMismatchException(PipelineException):
    """网络结构不一致异常"""
    def __init__(self, message: str, layer: str, error_code: Optional[str] = "SHAPE_MISMATCH"):
        self.layer = layer
        super().__init__(f"{layer}: {message}", error_code)


class NumericException(PipelineException):
    """数值异常（NaN、发散）"""
    pass


class StageException(PipelineException):
    """流水线阶段异常"""
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        code = getattr(cause, 'error_code', None) or "STAGE_FAILED"
        super().__init__(f"阶段[{stage}]失败: {cause}", error_code=code)
