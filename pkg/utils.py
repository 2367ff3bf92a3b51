# -*- coding: utf-8 -*-
"""
通用工具模块
提供日志配置、进度回调以及流水线中间结果的缓存
"""

import hashlib
import json
import time
import logging
from collections import OrderedDict
from typing import Optional, Dict, Any

# 配置日志
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def progress_callback(current: int, total: int, message: str = "") -> None:
    """
    进度回调函数，用于显示训练轮次和评估试验的进度

    Args:
        current: 当前进度
        total: 总进度
        message: 进度消息
    """
    percentage = int((current / total) * 100) if total > 0 else 0
    logger.info(f"进度: {current}/{total} ({percentage}%)" + (f" - {message}" if message else ""))


def config_hash(settings: Dict[str, Any]) -> str:
    """计算配置字典的稳定哈希，作为缓存键"""
    payload = json.dumps(settings, sort_keys=True, default=str)
    return hashlib.sha1(payload.encode('utf-8')).hexdigest()[:16]


class ResultCache:
    """中间结果缓存类，LRU淘汰并记录命中统计"""

    def __init__(self, max_size: int = 16):
        """
        初始化缓存

        Args:
            max_size: 最大缓存条目数
        """
        self.cache: "OrderedDict[str, Any]" = OrderedDict()
        self.max_size = max_size
        self.hit_count = 0
        self.miss_count = 0

    def get(self, key: str) -> Optional[Any]:
        """
        获取缓存数据

        Args:
            key: 缓存键

        Returns:
            缓存的数据，不存在时返回None
        """
        if key in self.cache:
            self.cache.move_to_end(key)
            self.hit_count += 1
            logger.debug(f"缓存命中: {key}")
            return self.cache[key]
        self.miss_count += 1
        logger.debug(f"缓存未命中: {key}")
        return None

    def set(self, key: str, value: Any) -> None:
        """设置缓存数据，超出容量时淘汰最久未使用的条目"""
        self.cache[key] = value
        self.cache.move_to_end(key)
        while len(self.cache) > self.max_size:
            oldest, _ = self.cache.popitem(last=False)
            logger.debug(f"缓存淘汰: {oldest}")

    def get_or_compute(self, key: str, factory) -> Any:
        """命中则返回缓存，否则调用 factory 计算并写入"""
        value = self.get(key)
        if value is None:
            value = factory()
            self.set(key, value)
        return value

    def clear(self) -> None:
        """清空缓存"""
        self.cache.clear()
        self.hit_count = 0
        self.miss_count = 0
        logger.info("缓存已清空")

    def get_stats(self) -> Dict[str, Any]:
        """获取缓存统计信息"""
        total_requests = self.hit_count + self.miss_count
        hit_rate = (self.hit_count / total_requests * 100) if total_requests > 0 else 0
        return {
            'size': len(self.cache),
            'max_size': self.max_size,
            'hit_count': self.hit_count,
            'miss_count': self.miss_count,
            'hit_rate': round(hit_rate, 2)
        }


class Stopwatch:
    """简单计时器，用于记录每次试验的耗时"""

    def __init__(self):
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start


# 全局缓存实例
result_cache = ResultCache()
