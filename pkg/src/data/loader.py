"""
Dataset and ground-truth file I/O.

CSV layout: header `seg,x1,...,xd`, one observation per row, comma separated,
`.` decimal, LF line endings, UTF-8. Ground truth is a JSON object
{dag, depth, seed, family, scheme, mode}.
"""
import json
import logging
import os
from typing import Dict, Optional

import numpy as np
import pandas as pd

from ..errors import DatasetError, NonsensError
from .simulator import GroundTruth, SegmentedDataset

logger = logging.getLogger(__name__)


class DatasetLoader:
    """Read and write segmented datasets in the CSV exchange format."""

    LABEL_COLUMN = "seg"
    FLOAT_FORMAT = "%.17g"

    @classmethod
    def column_names(cls, d: int):
        return [cls.LABEL_COLUMN] + [f"x{j + 1}" for j in range(d)]

    @classmethod
    def to_frame(cls, data: SegmentedDataset) -> pd.DataFrame:
        frame = pd.DataFrame(data.X, columns=cls.column_names(data.d)[1:])
        frame.insert(0, cls.LABEL_COLUMN, data.labels)
        return frame

    @classmethod
    def write_csv(cls, data: SegmentedDataset, path: str):
        cls.to_frame(data).to_csv(
            path, index=False, float_format=cls.FLOAT_FORMAT, lineterminator="\n", encoding="utf-8"
        )
        logger.info("wrote %d rows to %s", data.n_tot, path)

    @classmethod
    def read_csv(cls, path: str) -> SegmentedDataset:
        if not os.path.exists(path):
            raise DatasetError(f"dataset not found: {path}")
        try:
            frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
            raise DatasetError(f"cannot parse {path}: {exc}") from exc

        frame.columns = frame.columns.str.strip()
        if frame.columns[0] != cls.LABEL_COLUMN or frame.shape[1] < 3:
            raise DatasetError(f"{path}: expected header 'seg,x1,...,xd' with d >= 2")
        expected = cls.column_names(frame.shape[1] - 1)
        if list(frame.columns) != expected:
            raise DatasetError(f"{path}: header {list(frame.columns)} does not match {expected}")

        try:
            values = frame[expected[1:]].to_numpy(dtype=float)
            labels = frame[cls.LABEL_COLUMN].to_numpy(dtype=float)
        except ValueError as exc:
            raise DatasetError(f"{path}: non-numeric entries ({exc})") from exc
        if np.isnan(labels).any() or np.any(labels != np.round(labels)):
            raise DatasetError(f"{path}: segment labels must be integers")

        try:
            return SegmentedDataset(values, labels.astype(int))
        except NonsensError as exc:
            raise DatasetError(f"{path}: {exc}") from exc


def write_truth_json(truth: GroundTruth, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(truth.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_truth_json(path: str) -> Dict:
    if not os.path.exists(path):
        raise DatasetError(f"ground truth not found: {path}")
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"cannot parse {path}: {exc}") from exc
    if "dag" not in payload:
        raise DatasetError(f"{path}: missing 'dag'")
    return payload


def export_dataset(data: SegmentedDataset, truth: Optional[GroundTruth], prefix: str) -> Dict[str, str]:
    """Write `<prefix>.csv` and, when truth is given, `<prefix>.truth.json`."""
    paths = {"csv": f"{prefix}.csv"}
    DatasetLoader.write_csv(data, paths["csv"])
    if truth is not None:
        paths["truth"] = f"{prefix}.truth.json"
        write_truth_json(truth, paths["truth"])
    return paths
