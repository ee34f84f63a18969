"""Run configuration: JSON file merged over defaults, then flag overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any, Mapping, Optional

from .dialogue import ConfigurationError
from .experiments import (
    CURVES,
    DEFAULT_ASSORTMENT_GRID,
    DEFAULT_ATTRIBUTE_GRID,
    OVERLOAD_CONDITIONS,
    Cell,
    Environment,
    OverloadCondition,
    SweepSpec,
)
from .hesitation import CalibrationError, CalibrationTable

DEFAULTS: dict[str, Any] = {
    "base_seed": 0,
    "sessions": 200,
    "workers": 1,
    "out": "results",
    "provider": "rule",
    "calibration": None,
    "environment": {
        "catalog_seed": 7,
        "n_items": 2000,
        "n_attrs": 10,
        "coherence": 0.5,
        "categories": ["headphones"],
        "catalog_path": None,
        "schema_path": None,
        "p_base": 0.5,
        "prior": 0.5,
        "prior_strength": 4.0,
        "pickiness": 2,
        "openness": 2,
        "mode": "basic",
        "relevance": False,
        "turn_limit": 20,
    },
    "simulate": {
        "assortment": 3,
        "attributes": 8,
        "uncertainty": 2,
        "time_pressure": 2,
        "format_level": 1,
        "variant": "structured_selection",
    },
    "overload": {
        "conditions": [
            {
                "name": c.name,
                "time_pressure": c.time_pressure,
                "format_level": c.format_level,
                "uncertainty": c.uncertainty,
                "assortment": c.assortment,
                "attributes": c.attributes,
            }
            for c in OVERLOAD_CONDITIONS
        ]
    },
    "curves": {
        "curve": "total_info",
        "assortment_grid": list(DEFAULT_ASSORTMENT_GRID),
        "attribute_grid": list(DEFAULT_ATTRIBUTE_GRID),
        "uncertainties": [1, 2, 3],
        "fixed_assortment": 3,
        "fixed_attributes": 5,
    },
    "external": {"timeout": 10.0, "retries": 2},
}


def _merge(base: dict, over: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigurationError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    data: dict

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Mapping] = None) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    doc = json.load(fh)
            except FileNotFoundError:
                raise ConfigurationError(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: invalid JSON at line {exc.lineno} ({exc.msg})") from None
            if not isinstance(doc, dict):
                raise ConfigurationError(f"{path}: top level must be an object")
            data = _merge(data, doc)
        if overrides:
            data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
        cfg = cls(data)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    def validate(self) -> None:
        d = self.data
        if not isinstance(d["base_seed"], int) or d["base_seed"] < 0:
            raise ConfigurationError("base_seed must be a non-negative integer")
        if not isinstance(d["sessions"], int) or d["sessions"] < 1:
            raise ConfigurationError("sessions must be a positive integer")
        if not isinstance(d["workers"], int) or d["workers"] < 1:
            raise ConfigurationError("workers must be a positive integer")
        if d["provider"] not in ("rule", "external"):
            raise ConfigurationError("provider must be 'rule' or 'external'")
        if d["curves"]["curve"] not in CURVES:
            raise ConfigurationError(f"unknown curve {d['curves']['curve']!r}; choose from {', '.join(CURVES)}")
        env = d["environment"]
        for key in ("catalog_path", "schema_path"):
            if env[key] is not None:
                try:
                    open(env[key], "rb").close()
                except OSError:
                    raise ConfigurationError(f"environment.{key} not readable: {env[key]}") from None
        self.environment()
        self.sweep()
        self.conditions()
        self.cell()

    def calibration(self) -> CalibrationTable:
        path = self.data["calibration"]
        if path is None:
            return CalibrationTable()
        try:
            with open(path, encoding="utf-8") as fh:
                return CalibrationTable.from_json(fh.read())
        except OSError:
            raise ConfigurationError(f"calibration file not readable: {path}") from None
        except CalibrationError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None

    def environment(self) -> Environment:
        env = dict(self.data["environment"])
        env["categories"] = tuple(env["categories"])
        try:
            ext = self.data["external"]
            return Environment(
                calibration=self.calibration(),
                provider=self.data["provider"],
                external_timeout=float(ext["timeout"]),
                external_retries=int(ext["retries"]),
                **env,
            )
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def sweep(self, curve: Optional[str] = None) -> SweepSpec:
        c = dict(self.data["curves"])
        name = curve or c.pop("curve")
        c.pop("curve", None)
        return SweepSpec(
            name,
            assortment_grid=tuple(c["assortment_grid"]),
            attribute_grid=tuple(c["attribute_grid"]),
            uncertainties=tuple(c["uncertainties"]),
            fixed_assortment=c["fixed_assortment"],
            fixed_attributes=c["fixed_attributes"],
        )

    def conditions(self) -> tuple[OverloadCondition, ...]:
        try:
            return tuple(OverloadCondition(**c) for c in self.data["overload"]["conditions"])
        except TypeError as exc:
            raise ConfigurationError(f"overload.conditions: {exc}") from None

    def cell(self) -> Cell:
        s = self.data["simulate"]
        try:
            return Cell(**s)
        except TypeError as exc:
            raise ConfigurationError(f"simulate: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"
