import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MetadataValue = Union[str, int, float]


def format_value(value) -> str:
    """Shortest round-trip text for floats, plain str for everything else."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer, np.bool_)):
        return str(int(value))
    return str(value)


def format_cell(value) -> str:
    text = format_value(value)
    return f'"{text}"' if "," in text else text


def get_shaped_table(
        base_df: pd.DataFrame,
        include_columns: Optional[List[str]] = None,
        exclude_columns: Optional[List[str]] = None,
) -> pd.DataFrame:
    """
    Column selection for output tables
    - IF include_columns is provided, only these columns are kept, in that order. It takes priority
    - ELSE IF exclude_columns is provided, these columns are dropped.
    """
    current_df = base_df.copy()
    if include_columns is not None:
        valid = [col for col in include_columns if col in current_df.columns]
        missing = sorted(set(include_columns) - set(valid))
        if missing:
            logger.warning("Requested columns %s are not in the table", missing)
        return current_df[valid]
    if exclude_columns is not None:
        current_df = current_df.drop(columns=[col for col in exclude_columns if col in current_df.columns])
    return current_df


def write_table(df: pd.DataFrame, path: Union[str, Path],
                metadata: Optional[Dict[str, MetadataValue]] = None) -> Path:
    """
    Comma-separated table with '# key: value' metadata lines before the header.
    The bytes depend only on the data, so repeated runs give identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key}: {format_value(value)}" for key, value in (metadata or {}).items()]
    lines.append(",".join(str(col) for col in df.columns))
    for row in df.itertuples(index=False, name=None):
        lines.append(",".join(format_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote %s (%d rows)", path, len(df))
    return path


def read_table(path: Union[str, Path]) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Inverse of write_table: the frame and its metadata lines (values as text)."""
    metadata: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(":")
            metadata[key.strip()] = value.strip()
    return pd.read_csv(path, comment="#"), metadata
