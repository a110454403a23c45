import csv
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from .exceptions import DataParseError, UsageError

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)


def _try_parse_row(cells: List[str]) -> Union[List[float], None]:
    """Floats for every cell, or None when any cell is not a decimal number."""
    values = []
    for cell in cells:
        try:
            values.append(float(cell))
        except ValueError:
            return None
    return values


def load_data_csv(path: Union[str, Path]) -> np.ndarray:
    """Read an n x D matrix of comma-separated decimal floats.

    A single header row is allowed when it is the first row and is not
    numeric. Blank lines are skipped. Rows are numbered from 1 in errors,
    counting the header.

    Raises:
        DataParseError: On unreadable files, ragged rows, non-numeric or
            non-finite cells
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataParseError(0, f"cannot read {path}: {e}") from e

    data: List[List[float]] = []
    width = None
    for row_number, cells in enumerate(csv.reader(text.splitlines()), start=1):
        cells = [cell.strip() for cell in cells]
        if not cells or all(cell == "" for cell in cells):
            continue
        values = _try_parse_row(cells)
        if values is None:
            if row_number == 1:
                logger.debug(f"Treating row 1 of {path} as a header: {cells}")
                continue
            bad = next(cell for cell in cells if _try_parse_row([cell]) is None)
            raise DataParseError(row_number, f"not a decimal number: {bad!r}")
        if not all(math.isfinite(v) for v in values):
            raise DataParseError(row_number, "non-finite value")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DataParseError(row_number, f"expected {width} columns, found {len(values)}")
        data.append(values)

    if not data:
        raise DataParseError(0, f"{path} holds no data rows")
    logger.info(f"Loaded {len(data)} x {width} matrix from {path}")
    return np.array(data, dtype=float)


def validate_run_config(config_cls: Type[ConfigT], values: Dict[str, Any]) -> ConfigT:
    """Build a run configuration, turning validation failures into a usage error.

    Raises:
        UsageError: If pydantic rejects the values
    """
    try:
        return config_cls(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in error['loc']) or 'config'}: {error['msg']}"
            for error in e.errors()
        )
        logger.warning(f"Invalid {config_cls.__name__}: {problems}")
        raise UsageError(problems) from e
