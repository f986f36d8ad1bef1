# -*- coding: utf-8 -*-
"""
Data Transfer Utilities
=======================

Export of per-tick run metrics for external plotting.
Supports: CSV (.csv), JSON (.json)
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import pandas as pd

logger = logging.getLogger(__name__)

METRICS_COLUMNS: Sequence[str] = (
    "tick",
    "ch_count",
    "steglink_count",
    "routing_entries",
    "updates_sent",
    "hellos_sent",
    "walks_forwarded",
    "data_delivered",
)


def metrics_frame(rows: List[Dict[str, int]]) -> "pd.DataFrame":
    frame = pd.DataFrame(rows, columns=list(METRICS_COLUMNS))
    return frame.fillna(0).astype("int64")


def export_metrics_to_file(rows: List[Dict[str, int]], filepath: Union[str, Path]) -> bool:
    """
    Exports metric samples to a file (CSV or JSON).

    Args:
        rows: one dict per sample, keyed by METRICS_COLUMNS
        filepath: Destination file path
    """
    path = Path(filepath)
    ext = path.suffix.lower()
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        frame = metrics_frame(rows)
        if ext == ".csv":
            # LF endings and no BOM keep the file byte-identical across platforms
            frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        elif ext == ".json":
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                json.dump(frame.to_dict(orient="records"), f, indent=2, sort_keys=True)
                f.write("\n")
        else:
            raise ValueError(f"Unsupported file format: {ext}")
        return True
    except Exception as e:
        logger.error(f"Metrics export failed: {e}")
        raise


def import_metrics_from_file(filepath: Union[str, Path]) -> "pd.DataFrame":
    path = Path(filepath)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {filepath}")
    if path.suffix.lower() == ".json":
        return pd.read_json(path, orient="records")
    return pd.read_csv(path)
