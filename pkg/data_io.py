"""
File formats: datasets and constraints in, reports and graphs out.

Datasets are CSV, one sample per row, with an optional header of variable
names. Constraint files are CSV (columns cause,target,kind,sign,value) or JSON
(a list of objects with the same keys, or {"constraints": [...]}).
Variables are named as in the dataset header, or by 0-based column index.
"""

import json
import logging
import os
import re
from dataclasses import asdict

import numpy as np
import pandas as pd

from errors import ConstraintSpecError, DataFormatError
from lin_cdic import ConstraintOutcome, RunReport
from objective import Dataset
from sem_core import CausalGraph, EffectConstraint, PathConstraint

logger = logging.getLogger(__name__)

_MINUS_SIGNS = {"-", "−", "neg", "negative"}
_PLUS_SIGNS = {"+", "pos", "positive"}


def default_names(d):
    return tuple(f"x{j + 1}" for j in range(d))


def _is_number(text):
    try:
        float(text)
    except (TypeError, ValueError):
        return False
    return True


def load_dataset(path, standardize=False, log_transform=False):
    """Parse a CSV of samples; a first row with non-numeric cells is the header."""
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                          na_values=[], skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path}: empty file", line=1)
    except pd.errors.ParserError as e:
        found = re.search(r"line (\d+)", str(e))
        line = int(found.group(1)) if found else None
        raise DataFormatError(f"{path}: ragged row, field count differs from the first row", line=line)

    header = None
    first_data_line = 1
    if len(raw) and not all(_is_number(v) for v in raw.iloc[0]):
        header = tuple(str(v).strip() for v in raw.iloc[0])
        raw = raw.iloc[1:].reset_index(drop=True)
        first_data_line = 2
    if raw.empty:
        raise DataFormatError(f"{path}: no data rows", line=first_data_line)

    missing = raw.isna().to_numpy()
    if missing.any():
        r = int(np.argwhere(missing)[0][0])
        raise DataFormatError(f"{path}: ragged row, too few fields", line=r + first_data_line)

    values = raw.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = np.isnan(values) & ~raw.apply(lambda col: col.str.strip().str.lower() == "nan").to_numpy()
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataFormatError(
            f"{path}: non-numeric cell {raw.iat[r, c]!r}", line=int(r) + first_data_line, column=int(c) + 1
        )
    if not np.all(np.isfinite(values)):
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise DataFormatError(f"{path}: non-finite value", line=int(r) + first_data_line, column=int(c) + 1)

    if log_transform:
        if np.any(values <= 0):
            r, c = np.argwhere(values <= 0)[0]
            raise DataFormatError(
                f"{path}: log transform needs positive values", line=int(r) + first_data_line, column=int(c) + 1
            )
        values = np.log(values)

    dataset = Dataset(values, header or default_names(values.shape[1]))
    if standardize:
        dataset = dataset.standardized()
    logger.info("loaded %s: n=%d, d=%d", path, dataset.n, dataset.d)
    return dataset


def _resolve(name, names):
    key = str(name).strip()
    lowered = [n.lower() for n in names]
    if key.lower() in lowered:
        return lowered.index(key.lower())
    if re.fullmatch(r"\d+", key) and int(key) < len(names):
        return int(key)
    raise ConstraintSpecError(f"unknown variable {key!r}; known: {', '.join(names)}")


def _read_constraint_rows(path):
    if str(path).lower().endswith(".json"):
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: invalid JSON: {e.msg}", line=e.lineno, column=e.colno)
        if isinstance(data, dict):
            data = data.get("constraints", [])
        if not isinstance(data, list):
            raise DataFormatError(f"{path}: expected a list of constraints")
        return [dict(entry) for entry in data]
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as e:
        raise DataFormatError(f"{path}: {e}")
    frame.columns = [c.strip().lower() for c in frame.columns]
    for required in ("cause", "target"):
        if required not in frame.columns:
            raise DataFormatError(f"{path}: missing column {required!r}")
    return frame.to_dict(orient="records")


def _parse_sign(raw, where):
    text = str(raw).strip().lower() if raw is not None else ""
    if text in _PLUS_SIGNS:
        return 1.0
    if text in _MINUS_SIGNS:
        return -1.0
    raise ConstraintSpecError(f"{where}: effect constraint needs sign '+' or '-', got {raw!r}")


def _parse_value(raw, where):
    if raw is None or (isinstance(raw, str) and not raw.strip()):
        return None
    if isinstance(raw, float) and np.isnan(raw):
        return None
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConstraintSpecError(f"{where}: value must be a number, got {raw!r}") from None


def load_constraints(path, names, delta_init=0.01, rho_init=0.0):
    """Return (effect_constraints, path_constraints) resolved against ``names``."""
    names = tuple(names)
    effects, paths = [], []
    seen = set()
    for k, row in enumerate(_read_constraint_rows(path), start=1):
        where = f"{path} entry {k}"
        cause = _resolve(row.get("cause"), names)
        target = _resolve(row.get("target"), names)
        kind = str(row.get("kind") or "effect").strip().lower()
        value = row.get("value", row.get("delta", row.get("rho")))
        value = _parse_value(value, where)
        if (kind, cause, target) in seen:
            raise ConstraintSpecError(f"{where}: duplicate constraint {names[cause]}->{names[target]}")
        seen.add((kind, cause, target))
        if kind == "effect":
            sign = _parse_sign(row.get("sign"), where)
            magnitude = abs(value) if value is not None else delta_init
            effects.append(EffectConstraint(cause, target, sign * magnitude))
        elif kind == "path":
            paths.append(PathConstraint(cause, target, value if value is not None else rho_init))
        else:
            raise ConstraintSpecError(f"{where}: kind must be 'effect' or 'path', got {kind!r}")
    logger.info("loaded %d effect and %d path constraints from %s", len(effects), len(paths), path)
    return effects, paths


def _finite_or_none(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _matrix(W):
    return [[_finite_or_none(v) for v in row] for row in np.asarray(W)]


def _json_safe(obj):
    """Non-finite floats become None, which JSON writes as null."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(obj)
    return obj


def report_to_dict(report, names=None):
    names = list(names) if names is not None else list(default_names(report.W_est.shape[0]))
    constraints = []
    for c in report.constraints:
        prefix = "delta" if c.kind == "effect" else "rho"
        constraints.append({
            "i": c.cause,
            "j": c.target,
            "cause": names[c.cause],
            "target": names[c.target],
            "kind": c.kind,
            f"{prefix}_init": c.initial,
            f"{prefix}_final": c.final,
            "satisfied": c.satisfied,
            "escalations": c.escalations,
        })
    return {
        "method": report.method,
        "status": report.status,
        "success": report.success,
        "variables": names,
        "config": report.config,
        "W_est": _matrix(report.W_est),
        "W_star": _matrix(report.W_star),
        "T": _matrix(report.T),
        "nnz": report.graph.nnz,
        "h": report.h,
        "kkt": report.kkt,
        "n_solves": report.n_solves,
        "stage1_converged": report.stage1_converged,
        "constraints": constraints,
        "metrics": report.metrics,
        "timing": {"wall_time": report.wall_time},
    }


def report_to_json(report, names=None):
    return json.dumps(_json_safe(report_to_dict(report, names)), indent=2, sort_keys=True, allow_nan=False)


def _nan_if_none(v):
    return float("nan") if v is None else v


def report_from_json(text):
    """Rebuild (RunReport, names) from report_to_json output."""
    data = json.loads(text)
    outcomes = []
    for c in data["constraints"]:
        prefix = "delta" if c["kind"] == "effect" else "rho"
        outcomes.append(ConstraintOutcome(
            cause=c["i"],
            target=c["j"],
            kind=c["kind"],
            initial=c[f"{prefix}_init"],
            final=c[f"{prefix}_final"],
            satisfied=c["satisfied"],
            escalations=c["escalations"],
        ))
    W_star = np.array(data["W_star"], dtype=float)
    report = RunReport(
        method=data["method"],
        W_est=np.array(data["W_est"], dtype=float),
        W_star=W_star,
        graph=CausalGraph(W_star != 0),
        T=np.array(data["T"], dtype=float),
        constraints=outcomes,
        status=data["status"],
        h=_nan_if_none(data["h"]),
        kkt=_nan_if_none(data["kkt"]),
        wall_time=data["timing"]["wall_time"],
        config=data["config"],
        stage1_converged=data["stage1_converged"],
        n_solves=data["n_solves"],
        metrics=data["metrics"],
    )
    return report, data["variables"]


def write_dot(report, path, names=None):
    names = list(names) if names is not None else list(default_names(report.W_star.shape[0]))
    lines = ["digraph causal_model {"]
    for name in names:
        lines.append(f'  "{name}";')
    for i, j in report.graph.edges():
        lines.append(f'  "{names[i]}" -> "{names[j]}" [label="{report.W_star[i, j]:.4f}"];')
    lines.append("}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_matrix_csv(M, names, path):
    pd.DataFrame(np.asarray(M), index=list(names), columns=list(names)).to_csv(path)


def write_dataset(dataset, path):
    pd.DataFrame(dataset.samples, columns=list(dataset.names or default_names(dataset.d))).to_csv(
        path, index=False
    )


def constraints_to_records(constraints, names):
    records = []
    for c in constraints:
        if isinstance(c, EffectConstraint):
            records.append({"cause": names[c.cause], "target": names[c.target], "kind": "effect",
                            "sign": "+" if c.delta > 0 else "-", "value": abs(c.delta)})
        else:
            records.append({"cause": names[c.cause], "target": names[c.target], "kind": "path",
                            "value": c.rho})
    return records


def write_constraints_json(constraints, names, path):
    with open(path, "w") as f:
        f.write(json.dumps({"constraints": constraints_to_records(constraints, names)}, indent=2) + "\n")


class TraceWriter:
    """Solver trace sink writing one JSON object per iteration."""

    def __init__(self, path):
        self.path = path
        self._file = open(path, "w")

    def __call__(self, record):
        self._file.write(json.dumps(asdict(record), sort_keys=True) + "\n")

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_artifacts(report, out_dir, names=None):
    """Write report.json, graph.dot and effects.csv into out_dir; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    names = list(names) if names is not None else list(default_names(report.W_est.shape[0]))
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "graph": os.path.join(out_dir, "graph.dot"),
        "effects": os.path.join(out_dir, "effects.csv"),
    }
    with open(paths["report"], "w") as f:
        f.write(report_to_json(report, names) + "\n")
    write_dot(report, paths["graph"], names)
    write_matrix_csv(report.T, names, paths["effects"])
    logger.info("wrote artifacts to %s", out_dir)
    return paths
