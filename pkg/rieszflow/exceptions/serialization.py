import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np
from pydantic import BaseModel

from rieszflow.models.grid import GridField, GridSample
from rieszflow.models.kernel import KernelSpec
from rieszflow.models.particles import TrajectoryRecord

GRID_HEADER = np.dtype([("d", "<u4"), ("s", "<f8"), ("L", "<f8"), ("n", "<u4"), ("t", "<f8")])

PathLike = Union[str, Path]


def _number(value: float) -> str:
    """repr-точний запис числа"""
    return repr(float(value))


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_rows_csv(path: PathLike, fieldnames: list[str], rows: Iterable[dict[str, Any]]) -> Path:
    path = _prepare(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _number(v) if isinstance(v, (float, np.floating)) else v for k, v in row.items()})
    return path


def serialize_trajectory(record: TrajectoryRecord) -> list[dict[str, Any]]:
    d = record.spec.d
    rows = []
    for k, t in enumerate(record.times):
        for i in range(record.n):
            row: dict[str, Any] = {"t": float(t), "i": i}
            for a in range(d):
                row[f"x{a + 1}"] = float(record.positions[k, i, a])
            for a in range(d):
                row[f"v{a + 1}"] = float(record.velocities[k, i, a])
            rows.append(row)
    return rows


def write_trajectory_csv(record: TrajectoryRecord, path: PathLike) -> Path:
    """CSV `t,i,x1[,x2],v1[,v2]`"""
    d = record.spec.d
    fields = ["t", "i"] + [f"x{a + 1}" for a in range(d)] + [f"v{a + 1}" for a in range(d)]
    return write_rows_csv(path, fields, serialize_trajectory(record))


def write_scalar_series_csv(record: TrajectoryRecord, path: PathLike) -> Path:
    """CSV `t,H_N,eta_N,com_1[,com_2],dispersion`"""
    d = record.spec.d
    fields = ["t", "H_N", "eta_N"] + [f"com_{a + 1}" for a in range(d)] + ["dispersion"]
    rows = []
    for k, t in enumerate(record.times):
        row: dict[str, Any] = {"t": float(t), "H_N": float(record.energies[k]), "eta_N": float(record.eta[k])}
        for a in range(d):
            row[f"com_{a + 1}"] = float(record.com[k, a])
        row["dispersion"] = float(record.dispersion[k])
        rows.append(row)
    return write_rows_csv(path, fields, rows)


def write_grid_series_csv(samples: list[GridSample], path: PathLike) -> Path:
    """CSV `t,mass,energy,sup_grad_h,sup_hess_h,support_radius`"""
    fields = ["t", "mass", "energy", "sup_grad_h", "sup_hess_h", "support_radius"]
    return write_rows_csv(path, fields, (sample.model_dump(include=set(fields)) for sample in samples))


def write_grid(field: GridField, path: PathLike) -> Path:
    """Бінарний контейнер: заголовок {d, s, L, n, t} і f64 значення в порядку рядків"""
    path = _prepare(path)
    header = np.array([(field.d, field.spec.s, field.L, field.n, field.t)], dtype=GRID_HEADER)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def read_grid(path: PathLike, spec: Optional[KernelSpec] = None) -> GridField:
    raw = Path(path).read_bytes()
    header = np.frombuffer(raw[: GRID_HEADER.itemsize], dtype=GRID_HEADER)[0]
    d, n = int(header["d"]), int(header["n"])
    values = np.frombuffer(raw[GRID_HEADER.itemsize :], dtype="<f8")
    if values.size != n**d:
        raise ValueError(f"Grid file holds {values.size} values, expected {n ** d}")
    if spec is None:
        spec = KernelSpec.build(d, float(header["s"]))
    return GridField(
        spec=spec,
        L=float(header["L"]),
        n=n,
        values=values.reshape((n,) * d).copy(),
        t=float(header["t"]),
    )


def dump_json(data: Union[BaseModel, dict, list]) -> str:
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    return json.dumps(data, indent=2, sort_keys=True)


def write_json(data: Union[BaseModel, dict, list], path: PathLike) -> Path:
    path = _prepare(path)
    path.write_text(dump_json(data) + "\n", encoding="utf-8")
    return path


def config_hash(config: BaseModel) -> str:
    """sha256 канонічного JSON конфігурації"""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(config: BaseModel, spec: KernelSpec, code_version: str) -> dict[str, Any]:
    return {
        "config_hash": config_hash(config),
        "code_version": code_version,
        "kernel": {"d": spec.d, "s": spec.s, "c_ds": spec.c_ds, "gamma": spec.gamma},
    }


def read_points(path: PathLike) -> np.ndarray:
    """Точки з JSON-списку або текстового файлу (рядок на точку)"""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        points = np.array(json.loads(text), dtype=float)
    else:
        points = np.loadtxt(path, dtype=float, ndmin=2)
    if points.ndim == 1:
        points = points[:, None]
    return points
