"""Camera catalog and the mission cost model."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

__all__ = [
    "CatalogError",
    "CameraSpec",
    "CostParams",
    "DEFAULT_CATALOG",
    "load_catalog",
    "find_camera",
    "sensor_cost",
    "mission_cost",
]

K_RES = 12.698  # $/MP, slope of the resolution-price regression

DEFAULT_CATALOG = resources.files("tradespace") / "data" / "cameras.csv"

REQUIRED_COLUMNS = ("id", "manufacturer", "res_x", "res_y")


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class CameraSpec:
    id: str
    res_x: int
    res_y: int
    manufacturer: str = ""

    def __post_init__(self):
        if self.res_x < 1 or self.res_y < 1:
            raise CatalogError(f"camera {self.id!r}: resolution must be positive")

    @property
    def megapixels(self) -> float:
        return self.res_x * self.res_y / 1e6

    @property
    def unit_cost(self) -> float:
        return K_RES * self.megapixels


@dataclass(frozen=True)
class CostParams:
    k_res: float = K_RES
    platform_cost: float = 500.0
    support_cost: float = 0.0

    def __post_init__(self):
        if min(self.k_res, self.platform_cost, self.support_cost) < 0:
            raise CatalogError("cost parameters must be non-negative")

    @classmethod
    def from_scenario(cls, scenario) -> "CostParams":
        return cls(scenario.k_res, scenario.platform_cost, scenario.support_cost)


def load_catalog(path: str | Path | None = None) -> list[CameraSpec]:
    """Read the camera CSV, keeping file order. Extra columns are ignored."""
    path = DEFAULT_CATALOG if path is None else path
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise CatalogError(f"catalog {path} missing column(s): {', '.join(missing)}")
        cameras: list[CameraSpec] = []
        seen = set()
        for line, row in enumerate(reader, start=2):
            cid = row["id"].strip()
            if cid in seen:
                raise CatalogError(f"duplicate camera id {cid!r} (line {line})")
            try:
                rx, ry = int(row["res_x"]), int(row["res_y"])
            except ValueError as exc:
                raise CatalogError(f"line {line}: non-integer resolution") from exc
            cameras.append(CameraSpec(cid, rx, ry, row["manufacturer"].strip()))
            seen.add(cid)
    if not cameras:
        raise CatalogError(f"catalog {path} is empty")
    return cameras


def find_camera(catalog: list[CameraSpec], camera_id: str) -> int:
    for i, cam in enumerate(catalog):
        if cam.id == camera_id:
            return i
    raise CatalogError(f"unknown camera id {camera_id!r}")


def sensor_cost(spec: CameraSpec, params: CostParams = CostParams()) -> float:
    return params.k_res * spec.megapixels


def mission_cost(n_uav: int, spec: CameraSpec, params: CostParams = CostParams()) -> float:
    """Team cost: per-UAV airframe plus payload, plus a fixed support cost."""
    if n_uav < 1:
        raise ValueError("n_uav must be >= 1")
    return n_uav * (params.platform_cost + sensor_cost(spec, params)) + params.support_cost
