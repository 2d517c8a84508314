"""
CSV tables and the run manifest.

Every float is written with 17 significant digits so a table read back
reproduces the exact doubles; the same rows always give the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import polars as pl
import structlog

log = structlog.get_logger(__name__)

TRACKED_PACKAGES = ("numpy", "scipy", "polars", "pandas", "structlog", "python-dotenv")


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def rows_to_frame(rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> pl.DataFrame:
    """dict 행 목록을 문자열 컬럼 DataFrame 으로 변환 (컬럼 순서 보존)"""
    if columns is None:
        columns = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
    data = {col: [format_value(row.get(col)) for row in rows] for col in columns}
    return pl.DataFrame(data, schema={col: pl.Utf8 for col in columns})


def save_csv(df: pl.DataFrame, path: Path) -> Path:
    try:
        df.write_csv(str(path))
    except Exception:
        # Fallback via pandas if polars write_csv fails on this platform
        import pandas as pd

        pd_df = pd.DataFrame(df.to_dict(as_series=False))
        pd_df.to_csv(str(path), index=False)
    return path


def write_table(rows: Sequence[Dict[str, Any]], path: Path, metadata_cols: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write rows as CSV. metadata_cols (n, grid size, tolerances...) are added
    to every row so each number carries what is needed to reproduce it.
    """
    merged = [{**(metadata_cols or {}), **row} for row in rows]
    path.parent.mkdir(parents=True, exist_ok=True)
    save_csv(rows_to_frame(merged), path)
    log.info("table_written", path=str(path), rows=len(merged))
    return path


def config_hash(source: Dict[str, Any]) -> str:
    canonical = json.dumps(source, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def new_manifest(command: str, source: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "command": command,
        "config_name": source.get("name"),
        "config_hash": config_hash(source),
        "versions": package_versions(),
        "start_time": datetime.now().isoformat(),
        "status": "started",
        "errors": [],
        "outputs": [],
    }


def finish_manifest(manifest: Dict[str, Any], status: str) -> Dict[str, Any]:
    end = datetime.now()
    manifest["status"] = status
    manifest["end_time"] = end.isoformat()
    manifest["wall_time_s"] = (end - datetime.fromisoformat(manifest["start_time"])).total_seconds()
    return manifest


def save_manifest(manifest: Dict[str, Any], output_dir: Path) -> Path:
    """실행 결과 매니페스트 저장"""
    manifests = output_dir / "manifests"
    manifests.mkdir(parents=True, exist_ok=True)
    path = manifests / f"{manifest['command']}_manifest.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False, default=str)
    return path
