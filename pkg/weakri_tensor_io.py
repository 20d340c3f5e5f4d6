#!/usr/bin/env python3
"""
weakri: coincidence tensor files

Text layout, one file per acquisition:

    # format: weakri-tensor/1
    # n_pixels: 24
    # pitch: 1.0
    # origin: -0.5
    # total: 1000000
    # ...acquisition metadata (settings, stream name, seed)...
    X_A Y_A X_B Y_B count
    11 12 10 13 42
    ...

The header is a YAML mapping with every line prefixed by '# '. Only nonzero
cells are listed, in C order of the (X_A, Y_A, X_B, Y_B) index.
"""

from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd
import yaml
from loguru import logger

from weakri_wmsim import CoincidenceTensor, PixelGrid

FORMAT_TAG = 'weakri-tensor/1'
ROW_COLUMNS = ['X_A', 'Y_A', 'X_B', 'Y_B', 'count']
GEOMETRY_KEYS = ('n_pixels', 'pitch', 'origin')


class TensorFormatError(ValueError):
    """Raised when a tensor file does not follow the documented layout"""


def _plain(value: Any) -> Any:
    """numpy scalars and tuples to YAML-safe builtins"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_tensor(tensor: CoincidenceTensor, path: Union[str, Path]) -> Path:
    path = Path(path)
    header: Dict[str, Any] = {
        'format': FORMAT_TAG,
        'n_pixels': tensor.grid.n_pixels,
        'pitch': float(tensor.grid.pitch),
        'origin': float(tensor.grid.origin),
        'total': int(tensor.total),
    }
    header.update(_plain(tensor.metadata))

    cells = np.nonzero(tensor.counts)
    rows = pd.DataFrame({name: idx for name, idx in zip(ROW_COLUMNS[:4], cells)})
    rows['count'] = tensor.counts[cells]

    header_text = yaml.safe_dump(header, sort_keys=False, default_flow_style=None)
    with open(path, 'w') as f:
        for line in header_text.splitlines():
            f.write(f"# {line}\n")
        rows.to_csv(f, sep=' ', index=False, lineterminator='\n')

    logger.bind(component='tensor_io').debug(f"Wrote {len(rows)} nonzero cells to {path}")
    return path


def read_tensor(path: Union[str, Path]) -> CoincidenceTensor:
    path = Path(path)
    header_lines = []
    with open(path, 'r') as f:
        for line in f:
            if not line.startswith('#'):
                break
            header_lines.append(line[2:] if line.startswith('# ') else line[1:])

    try:
        header = yaml.safe_load(''.join(header_lines)) or {}
    except yaml.YAMLError as e:
        raise TensorFormatError(f"{path}: unreadable header: {e}")
    if header.get('format') != FORMAT_TAG:
        raise TensorFormatError(f"{path}: expected format {FORMAT_TAG}, got {header.get('format')!r}")
    missing = [key for key in (*GEOMETRY_KEYS, 'total') if key not in header]
    if missing:
        raise TensorFormatError(f"{path}: header lacks {missing}")

    grid = PixelGrid(int(header['n_pixels']), float(header['pitch']), float(header['origin']))
    rows = pd.read_csv(path, sep=r'\s+', comment='#', dtype=np.int64)
    if list(rows.columns) != ROW_COLUMNS:
        raise TensorFormatError(f"{path}: columns {list(rows.columns)}, expected {ROW_COLUMNS}")

    index = rows[ROW_COLUMNS[:4]].to_numpy()
    if len(rows) and (index.min() < 0 or index.max() >= grid.n_pixels):
        raise TensorFormatError(f"{path}: pixel index outside 0..{grid.n_pixels - 1}")
    if (rows['count'] <= 0).any():
        raise TensorFormatError(f"{path}: listed cells must have positive counts")

    counts = np.zeros(grid.shape, dtype=np.int64)
    np.add.at(counts, tuple(index.T), rows['count'].to_numpy())

    metadata = {k: v for k, v in header.items() if k not in (*GEOMETRY_KEYS, 'total', 'format')}
    try:
        return CoincidenceTensor(counts, grid, int(header['total']), metadata)
    except ValueError as e:
        raise TensorFormatError(f"{path}: {e}")
