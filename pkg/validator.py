# -*- coding: utf-8 -*-
"""
输入验证模块
提供体模规格、控制器参数、训练配置、配准配置等输入数据的验证功能
"""

import os
import re
import math
from typing import Any, Iterable, Optional
from config import ValidationException


class InputValidator:
    """输入验证器"""

    @staticmethod
    def validate_number_input(value: Any, min_val: float = None, max_val: float = None,
                              field_name: str = "数值") -> float:
        """
        验证数字输入

        Args:
            value: 输入值
            min_val: 最小值
            max_val: 最大值
            field_name: 字段名称（用于错误消息）

        Returns:
            验证后的数字

        Raises:
            ValidationException: 数字格式不正确或超出范围
        """
        try:
            num_value = float(value)
        except (ValueError, TypeError):
            raise ValidationException(f"{field_name}必须是数字", error_code="INVALID_NUMBER")

        if not math.isfinite(num_value):
            raise ValidationException(f"{field_name}必须是有限值", error_code="NON_FINITE")

        if min_val is not None and num_value < min_val:
            raise ValidationException(
                f"{field_name}不能小于{min_val}",
                error_code="NUMBER_TOO_SMALL"
            )

        if max_val is not None and num_value > max_val:
            raise ValidationException(
                f"{field_name}不能大于{max_val}",
                error_code="NUMBER_TOO_LARGE"
            )

        return num_value

    @staticmethod
    def validate_positive(value: Any, field_name: str) -> float:
        """验证严格为正的数字"""
        num_value = InputValidator.validate_number_input(value, field_name=field_name)
        if num_value <= 0:
            raise ValidationException(f"{field_name}必须大于0", error_code="NOT_POSITIVE")
        return num_value

    @staticmethod
    def validate_rib_cage_spec(spec) -> None:
        """
        验证肋骨体模规格

        Args:
            spec: RibCageSpec 实例

        Raises:
            ValidationException: 字段非法，错误消息包含字段名
        """
        if int(spec.rib_count) != spec.rib_count or spec.rib_count < 0:
            raise ValidationException("rib_count必须是非负整数", error_code="INVALID_RIB_COUNT")
        for name in ('rib_width', 'gap_width', 'bone_stiffness', 'tissue_stiffness', 'bone_thickness'):
            InputValidator.validate_positive(getattr(spec, name), name)
        for name in ('rib_length', 'sternum_width', 'skin_thickness', 'margin'):
            InputValidator.validate_number_input(getattr(spec, name), min_val=0, field_name=name)
        if spec.rib_count > 0:
            InputValidator.validate_positive(spec.rib_length, 'rib_length')
        if spec.bone_stiffness <= spec.tissue_stiffness:
            raise ValidationException("bone_stiffness必须大于tissue_stiffness", error_code="INVALID_STIFFNESS")
        InputValidator.validate_number_input(spec.rib_axis_angle, min_val=1.0, max_val=179.0,
                                             field_name='rib_axis_angle')
        InputValidator.validate_positive(spec.target_depth, 'target_depth')
        if spec.target_depth <= spec.skin_thickness:
            raise ValidationException("target_depth必须大于skin_thickness", error_code="INVALID_TARGET_DEPTH")
        extent = list(spec.target_extent)
        if len(extent) != 3:
            raise ValidationException("target_extent必须包含3个分量", error_code="INVALID_TARGET_EXTENT")
        for value in extent:
            InputValidator.validate_positive(value, 'target_extent')
        if spec.target_depth - extent[2] / 2.0 <= spec.skin_thickness + spec.bone_thickness:
            raise ValidationException("目标区域必须严格位于骨平面之下: target_depth",
                                      error_code="TARGET_ABOVE_BONE")
        InputValidator.validate_number_input(spec.undulation_amplitude, min_val=0,
                                             field_name='undulation_amplitude')
        InputValidator.validate_number_input(spec.undulation_wavelength, min_val=25.0,
                                             field_name='undulation_wavelength')
        InputValidator.validate_positive(spec.grid_step, 'grid_step')

    @staticmethod
    def validate_controller_params(ctrl) -> None:
        """验证阻抗控制器参数，全部必须为正"""
        for name in ('stiffness_axial', 'stiffness_lateral', 'desired_force', 'speed', 'sample_rate'):
            InputValidator.validate_positive(getattr(ctrl, name), name)

    @staticmethod
    def validate_train_config(cfg) -> None:
        """验证训练配置"""
        InputValidator.validate_positive(cfg.learning_rate, 'learning_rate')
        InputValidator.validate_number_input(cfg.epochs, min_val=1, field_name='epochs')
        InputValidator.validate_number_input(cfg.batch_size, min_val=1, field_name='batch_size')
        if cfg.optimizer not in ('sgd', 'sgd_momentum', 'adam'):
            raise ValidationException(f"不支持的优化器: {cfg.optimizer}", error_code="INVALID_OPTIMIZER")
        if len(cfg.class_weights) != 4:
            raise ValidationException("class_weights必须包含4个分量", error_code="INVALID_CLASS_WEIGHTS")

    @staticmethod
    def validate_cpd_config(cfg) -> None:
        """验证CPD配置"""
        if not 0 <= cfg.outlier_weight < 1:
            raise ValidationException("outlier_weight必须位于[0,1)", error_code="INVALID_OUTLIER_WEIGHT")
        InputValidator.validate_positive(cfg.tolerance, 'tolerance')
        InputValidator.validate_number_input(cfg.max_iterations, min_val=1, field_name='max_iterations')
        InputValidator.validate_number_input(cfg.sigma2_floor, min_val=0, field_name='sigma2_floor')

    @staticmethod
    def validate_points(points: Any, field_name: str = "点云") -> None:
        """验证点坐标不含 NaN/Inf"""
        import numpy as np
        arr = np.asarray(points, dtype=float)
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValidationException(f"{field_name}包含NaN或Inf坐标", error_code="NON_FINITE_POINTS")

    @staticmethod
    def validate_file_path(file_path: str, allowed_extensions: Optional[Iterable[str]] = None) -> str:
        """
        验证文件路径

        Args:
            file_path: 文件路径
            allowed_extensions: 允许的文件扩展名列表

        Returns:
            验证后的文件路径

        Raises:
            ValidationException: 文件路径不正确
        """
        if not file_path or not isinstance(file_path, str):
            raise ValidationException("文件路径不能为空", error_code="EMPTY_FILE_PATH")

        file_path = file_path.strip()

        dangerous_chars = ['<', '>', '"', '|', '*', '?']
        if any(char in file_path for char in dangerous_chars):
            raise ValidationException("文件路径包含非法字符", error_code="INVALID_PATH_CHARACTERS")

        if allowed_extensions:
            _, ext = os.path.splitext(file_path)
            if ext.lower() not in [e.lower() for e in allowed_extensions]:
                raise ValidationException(
                    f"只允许以下文件类型: {', '.join(allowed_extensions)}",
                    error_code="INVALID_FILE_EXTENSION"
                )

        return file_path

    @staticmethod
    def sanitize_error_message(error_msg: str) -> str:
        """
        清理错误消息，避免在终端输出过长的绝对路径

        Args:
            error_msg: 原始错误消息

        Returns:
            清理后的错误消息
        """
        error_msg = re.sub(r'(/[^\s/]+){3,}/([^\s/]+)', r'.../\2', error_msg)

        if len(error_msg) > 200:
            error_msg = error_msg[:200] + "..."

        return error_msg


# 全局验证器实例
validator = InputValidator()
