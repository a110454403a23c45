import io
import json
import math
from typing import Any, Dict, Iterable, Sequence

import numpy as np
from pydantic import BaseModel

THEOREM6_COLUMNS = (
    "n",
    "sne_cost_fitted_residual",
    "closed_form_value",
    "seed",
    "sne_cost_mean",
    "slope",
    "offset",
)


def format_float(value: float) -> str:
    """17 significant digits: enough to read every double back exactly."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def _format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    out = io.StringIO()
    if header:
        out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(_format_cell(v) for v in row) + "\n")
    return out.getvalue()


def matrix_csv(matrix: np.ndarray) -> str:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    header = [f"y{k}" for k in range(matrix.shape[1])]
    return render_csv(header, matrix.tolist())


def render_json(data: Dict[str, Any]) -> str:
    """Insertion-ordered keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def build_report(config: BaseModel, result: Dict[str, Any]) -> Dict[str, Any]:
    """Every report carries the resolved configuration it was produced from."""
    return {"config": config.model_dump(mode="json"), "result": result}


def theorem6_csv(rows: Iterable[BaseModel]) -> str:
    return render_csv(
        THEOREM6_COLUMNS,
        ([getattr(row, column) for column in THEOREM6_COLUMNS] for row in rows),
    )
