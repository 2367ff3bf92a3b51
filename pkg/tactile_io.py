# -*- coding: utf-8 -*-
"""
文件格式读写模块
点云/轨迹/路径/模板 CSV、key=value 文本（体模规格、变换、汇总）、
以及 TWIN（信号窗口）和 TNET（网络参数）二进制容器
"""

import os
import struct
import logging
from collections import OrderedDict
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import parse_key_value_lines, ValidationException
from validator import validator
from tactile_phantom import PointCloud, PointCloudKind, RibCageSpec, SampleLabel

logger = logging.getLogger(__name__)

WINDOW_MAGIC = b"TWIN"
NETWORK_MAGIC = b"TNET"
FORMAT_VERSION = 1
_CIRCULAR_KEY = "meta.circular_padding"


def _ensure_parent(path: str) -> None:
    path = validator.validate_file_path(path)
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _to_csv(df: pd.DataFrame, path: str, float_format: str = '%.6f') -> None:
    _ensure_parent(path)
    df.to_csv(path, index=False, float_format=float_format, lineterminator='\n')


def write_key_values(values: Dict[str, Any], path: str) -> None:
    """写出扁平的 key=value 文本，列表以逗号连接"""
    _ensure_parent(path)
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple, np.ndarray)):
            value = ','.join(str(v) for v in np.asarray(value).ravel().tolist())
        elif isinstance(value, (bool, np.bool_)):
            value = 'true' if value else 'false'
        lines.append(f"{key}={value}")
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\n'.join(lines) + '\n')


def read_key_values(path: str) -> Dict[str, Any]:
    path = validator.validate_file_path(path)
    if not os.path.exists(path):
        raise ValidationException(f"文件不存在: {path}", error_code="FILE_NOT_FOUND")
    with open(path, 'r', encoding='utf-8') as f:
        return parse_key_value_lines(f.read())


# ---- 体模规格 ----

def read_phantom_spec(path: str) -> RibCageSpec:
    """读取 key=value 体模规格，键可以带 phantom. 前缀"""
    raw = read_key_values(path)
    settings = {k.split('.', 1)[1] if k.startswith('phantom.') else k: v for k, v in raw.items()}
    unknown = [k for k in settings if k not in RibCageSpec.__dataclass_fields__]
    if unknown:
        logger.warning(f"体模规格中的未知键被忽略: {', '.join(unknown)}")
    return RibCageSpec.from_config(settings)


# ---- 点云 ----

def write_point_cloud(pc: PointCloud, path: str) -> None:
    """点云 CSV（x_mm,y_mm,z_mm，6位小数）加 .meta 侧车文件，体素权重写在侧车文件中"""
    df = pd.DataFrame(np.asarray(pc.points), columns=['x_mm', 'y_mm', 'z_mm'])
    _to_csv(df, path)
    meta = {'kind': pc.kind.value, 'frame_id': pc.frame_id, 'count': len(pc)}
    if pc.warning:
        meta['warning'] = pc.warning
    if pc.weights is not None and len(pc):
        meta['weights'] = [repr(float(w)) for w in pc.weights]
    write_key_values(meta, path + '.meta')


def read_point_cloud(path: str, kind: Optional[PointCloudKind] = None) -> PointCloud:
    df = pd.read_csv(path)
    missing = {'x_mm', 'y_mm', 'z_mm'} - set(df.columns)
    if missing:
        raise ValidationException(f"点云文件缺少列: {', '.join(sorted(missing))}", error_code="BAD_PC_CSV")
    meta = read_key_values(path + '.meta') if os.path.exists(path + '.meta') else {}
    kind = kind or PointCloudKind(meta.get('kind', PointCloudKind.TEMPLATE_US.value))
    weights = meta.get('weights')
    if weights is not None:
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
    return PointCloud(df[['x_mm', 'y_mm', 'z_mm']].to_numpy(dtype=float), kind,
                      str(meta.get('frame_id', 'template')), meta.get('warning'), weights=weights)


# ---- 轨迹 ----

def traces_to_frame(traces: Iterable) -> pd.DataFrame:
    frames = []
    for trace in traces:
        frames.append(pd.DataFrame({
            'path_id': trace.path_id,
            'seq': np.arange(len(trace)),
            'arc_mm': trace.arc_s,
            'x_mm': trace.pos[:, 0],
            'y_mm': trace.pos[:, 1],
            'z_mm': trace.pos[:, 2],
            'dz_mm': trace.dz,
            'force_n': trace.force,
            'label': [SampleLabel(int(v)).text for v in trace.labels],
        }))
    columns = ['path_id', 'seq', 'arc_mm', 'x_mm', 'y_mm', 'z_mm', 'dz_mm', 'force_n', 'label']
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)


def write_traces(traces: Iterable, path: str) -> None:
    _to_csv(traces_to_frame(traces), path)


def read_traces(path: str) -> List:
    """读回 TactileTrace 列表，z_raw 取 z_mm"""
    from tactile_simulator import TactileTrace
    df = pd.read_csv(path, dtype={'path_id': str})
    traces = []
    for path_id, group in df.groupby('path_id', sort=False):
        group = group.sort_values('seq')
        labels = [SampleLabel.from_text(t) for t in group['label']]
        pos = group[['x_mm', 'y_mm', 'z_mm']].to_numpy(dtype=float)
        traces.append(TactileTrace(str(path_id), group['arc_mm'].to_numpy(dtype=float), pos, pos[:, 2],
                                   group['dz_mm'].to_numpy(dtype=float), group['force_n'].to_numpy(dtype=float),
                                   np.asarray(labels, dtype=np.int64)))
    return traces


# ---- 路径与模板 ----

def write_paths(paths: Iterable, path: str) -> None:
    """路径 CSV：path_id,seq,x_mm,y_mm,z_mm，带倾角或触发信息时追加 tilt_deg,trigger"""
    frames = []
    extended = False
    for p in paths:
        df = pd.DataFrame({'path_id': p.path_id, 'seq': np.arange(len(p.waypoints)),
                           'x_mm': p.waypoints[:, 0], 'y_mm': p.waypoints[:, 1], 'z_mm': p.waypoints[:, 2]})
        if p.tilt_deg is not None or p.trigger is not None:
            extended = True
            n = len(p.waypoints)
            df['tilt_deg'] = np.zeros(n) if p.tilt_deg is None else np.asarray(p.tilt_deg, dtype=float)
            df['trigger'] = np.zeros(n, dtype=int) if p.trigger is None else np.asarray(p.trigger).astype(int)
        frames.append(df)
    out = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=['path_id', 'seq', 'x_mm', 'y_mm', 'z_mm'])
    if extended:
        out['tilt_deg'] = out['tilt_deg'].fillna(0.0)
        out['trigger'] = out['trigger'].fillna(0).astype(int)
    _to_csv(out, path)


def read_paths(path: str) -> List:
    from tactile_scanplan import ScanPath3D
    df = pd.read_csv(path, dtype={'path_id': str})
    result = []
    for path_id, group in df.groupby('path_id', sort=False):
        group = group.sort_values('seq')
        kwargs = {}
        if 'tilt_deg' in group:
            kwargs['tilt_deg'] = group['tilt_deg'].to_numpy(dtype=float)
        if 'trigger' in group:
            kwargs['trigger'] = group['trigger'].to_numpy().astype(bool)
        result.append(ScanPath3D(group[['x_mm', 'y_mm', 'z_mm']].to_numpy(dtype=float),
                                 path_id=str(path_id), **kwargs))
    return result


def write_template(template, path: str) -> None:
    """模板 CSV：line_id,u_px,v_px，前 4 行为 corner"""
    rows = [('corner', float(u), float(v)) for u, v in template.corner_pixels]
    for line_id, line in zip(template.line_ids, template.lines):
        rows.extend((line_id, float(u), float(v)) for u, v in line)
    _to_csv(pd.DataFrame(rows, columns=['line_id', 'u_px', 'v_px']), path)


def read_template(path: str):
    from tactile_scanplan import ScanPathTemplate
    df = pd.read_csv(path, dtype={'line_id': str})
    corners = df[df['line_id'] == 'corner'][['u_px', 'v_px']].to_numpy(dtype=float)
    if len(corners) != 4:
        raise ValidationException(f"模板需要4个角点，实际{len(corners)}个", error_code="BAD_TEMPLATE")
    lines, ids = [], []
    for line_id, group in df[df['line_id'] != 'corner'].groupby('line_id', sort=False):
        lines.append(group[['u_px', 'v_px']].to_numpy(dtype=float))
        ids.append(str(line_id))
    return ScanPathTemplate(corners, lines, ids)


# ---- TWIN 窗口容器 ----

def write_windows(windows: Sequence, path: str) -> None:
    """TWIN：魔数、u16 版本号，之后每个窗口为小端 f64 数值加 u8 标签"""
    _ensure_parent(path)
    with open(path, 'wb') as f:
        f.write(WINDOW_MAGIC + struct.pack('<H', FORMAT_VERSION))
        for w in windows:
            f.write(np.asarray(w.values, dtype='<f8').tobytes())
            f.write(np.asarray(w.labels, dtype=np.uint8).tobytes())


def read_windows(path: str, length: int = 400) -> List:
    from tactile_simulator import SignalWindow
    with open(path, 'rb') as f:
        data = f.read()
    if data[:4] != WINDOW_MAGIC:
        raise ValidationException("不是 TWIN 文件", error_code="BAD_MAGIC")
    (version,) = struct.unpack('<H', data[4:6])
    if version != FORMAT_VERSION:
        raise ValidationException(f"不支持的 TWIN 版本: {version}", error_code="BAD_VERSION")
    body = data[6:]
    record = length * 9
    if len(body) % record:
        raise ValidationException("TWIN 文件长度与窗口长度不符", error_code="TRUNCATED_FILE")
    windows = []
    for i in range(len(body) // record):
        chunk = body[i * record:(i + 1) * record]
        values = np.frombuffer(chunk[:length * 8], dtype='<f8').astype(np.float64)
        labels = np.frombuffer(chunk[length * 8:], dtype=np.uint8).copy()
        windows.append(SignalWindow(values, labels, f"W{i}", 0.0, float(length - 1)))
    return windows


# ---- TNET 网络容器 ----

def write_network(params, path: str) -> None:
    """TNET：魔数、u16 版本号，之后每个张量为 名字长度 u16、名字、秩 u8、各维 u32、小端 f64 数据"""
    _ensure_parent(path)
    tensors: List[Tuple[str, np.ndarray]] = list(params.tensors.items())
    if params.padding == 'circular':
        tensors.append((_CIRCULAR_KEY, np.array(1.0)))
    with open(path, 'wb') as f:
        f.write(NETWORK_MAGIC + struct.pack('<H', FORMAT_VERSION))
        for name, value in tensors:
            encoded = name.encode('utf-8')
            value = np.asarray(value, dtype='<f8')
            f.write(struct.pack('<H', len(encoded)) + encoded)
            f.write(struct.pack('<B', value.ndim))
            f.write(struct.pack(f'<{value.ndim}I', *value.shape))
            f.write(value.tobytes(order='C'))
    logger.info(f"网络参数已保存: {path}")


def read_network(path: str):
    from tactile_classifier import NetworkParams
    with open(path, 'rb') as f:
        data = f.read()
    if data[:4] != NETWORK_MAGIC:
        raise ValidationException("不是 TNET 文件", error_code="BAD_MAGIC")
    (version,) = struct.unpack('<H', data[4:6])
    if version != FORMAT_VERSION:
        raise ValidationException(f"不支持的 TNET 版本: {version}", error_code="BAD_VERSION")
    offset = 6
    tensors = OrderedDict()
    padding = 'zero'
    try:
        while offset < len(data):
            (name_len,) = struct.unpack_from('<H', data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode('utf-8')
            offset += name_len
            (rank,) = struct.unpack_from('<B', data, offset)
            offset += 1
            shape = struct.unpack_from(f'<{rank}I', data, offset)
            offset += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            value = np.frombuffer(data, dtype='<f8', count=count, offset=offset).astype(np.float64)
            offset += 8 * count
            if name == _CIRCULAR_KEY:
                padding = 'circular'
                continue
            tensors[name] = value.reshape(shape)
    except (struct.error, ValueError) as e:
        raise ValidationException(f"TNET 文件已损坏: {e}", error_code="TRUNCATED_FILE")
    params = NetworkParams(tensors, padding)
    params.validate()
    return params


# ---- 日志与报告 ----

def write_training_log(history: Sequence[Tuple[int, float, float]], path: str) -> None:
    _to_csv(pd.DataFrame(list(history), columns=['epoch', 'loss', 'accuracy']), path, float_format='%.8f')


def write_transform(result, path: str) -> None:
    """变换文件：angle_deg, tx_mm, ty_mm, sigma2, iterations"""
    T = result.transform
    write_key_values({'angle_deg': repr(T.angle_deg), 'tx_mm': repr(T.tx), 'ty_mm': repr(T.ty),
                      'sigma2': repr(result.sigma2_final), 'iterations': result.iterations}, path)


def read_transform(path: str):
    from tactile_registration import RigidTransform
    values = read_key_values(path)
    try:
        return RigidTransform(float(values['angle_deg']), float(values['tx_mm']), float(values['ty_mm']))
    except KeyError as e:
        raise ValidationException(f"变换文件缺少键: {e}", error_code="BAD_TRANSFORM")


def write_registration_report(rows: Sequence[Dict[str, Any]], path: str) -> None:
    """逐次试验配准误差：trial, dist_mm, ang_deg, iters"""
    df = pd.DataFrame(rows).rename(columns={'reg_dist': 'dist_mm', 'reg_ang': 'ang_deg', 'cpd_iterations': 'iters'})
    _to_csv(df.reindex(columns=['trial', 'dist_mm', 'ang_deg', 'iters']), path)


def write_report(report, out_dir: str) -> Dict[str, str]:
    """写出评估报告：逐次试验 CSV、配准误差 CSV、汇总 key=value 和配置快照"""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        'rows': os.path.join(out_dir, 'report.csv'),
        'summary': os.path.join(out_dir, 'summary.txt'),
        'config': os.path.join(out_dir, 'config_snapshot.txt'),
        'registration': os.path.join(out_dir, 'registration.csv'),
    }
    _to_csv(report.to_frame(), files['rows'])
    write_registration_report(report.rows, files['registration'])
    write_key_values(report.summary, files['summary'])
    write_key_values(report.config_snapshot, files['config'])
    logger.info(f"评估报告已写出: {out_dir}")
    return files
