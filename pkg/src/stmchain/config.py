"""Run configuration (JSON) for the command-line front end.

Angles are degrees here and radians everywhere past this boundary. Unknown keys
are rejected so that typos fail loudly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ValidationError
from .model import ChainModel, Modulation, SiteParams, Truncation, build_chain, table_s1_chain

PRESETS = {"table-s1": table_s1_chain}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SiteConfig(_Strict):
    omega0: float
    gamma: float
    k_a: float
    k_b: float
    kappa: float = 0.0


class DeviceConfig(_Strict):
    preset: Optional[Literal["table-s1"]] = None
    site1: Optional[SiteConfig] = None
    site2: Optional[SiteConfig] = None
    lambda_static: Optional[float] = None

    @model_validator(mode="after")
    def _complete(self):
        if self.preset is None and None in (self.site1, self.site2, self.lambda_static):
            raise ValueError("device needs either 'preset' or site1, site2 and lambda_static")
        return self

    def build(self) -> ChainModel:
        base = PRESETS[self.preset]() if self.preset is not None else None
        sites = []
        for name in ("site1", "site2"):
            given = getattr(self, name)
            fields = dict(getattr(base, name).__dict__) if base is not None else {}
            fields.update(given.model_dump() if given is not None else {})
            sites.append(_site(f"device.{name}", fields))
        lam = self.lambda_static if self.lambda_static is not None else base.lambda_static
        try:
            return build_chain(sites[0], sites[1], lam)
        except ValidationError as exc:
            raise ValidationError(f"device: {exc}") from exc


def _site(path, fields):
    try:
        site = SiteParams(**fields)
        site.validate(path)
    except ValidationError as exc:
        msg = str(exc).replace("site.", f"{path}.").replace("site:", f"{path}:")
        raise ValidationError(msg) from exc
    return site


class ModulationConfig(_Strict):
    beta: Optional[float] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    omega_m: float = 20.0
    phi_deg: float = 0.0

    def betas(self):
        b1 = self.beta1 if self.beta1 is not None else self.beta
        b2 = self.beta2 if self.beta2 is not None else self.beta
        return (0.0 if b1 is None else b1), (0.0 if b2 is None else b2)

    def build(self) -> Modulation:
        b1, b2 = self.betas()
        return Modulation.from_degrees(b1, b2, self.omega_m, self.phi_deg)


class TruncationConfig(_Strict):
    mode: Literal["fixed", "adaptive"] = "adaptive"
    P: int = 0
    tol: float = 1e-9
    cap: int = 40

    def build(self) -> Truncation:
        return Truncation(self.mode, self.P, self.tol, self.cap)


class Axis(_Strict):
    start: Optional[float] = None
    stop: Optional[float] = None
    num: Optional[int] = None
    points: Optional[list[float]] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.points is None and None in (self.start, self.stop, self.num):
            raise ValueError("axis needs 'points' or start, stop and num")
        if self.points is None and self.num < 1:
            raise ValueError("axis num must be >= 1")
        return self

    def values(self) -> np.ndarray:
        if self.points is not None:
            return np.asarray(self.points, dtype=float)
        return np.linspace(self.start, self.stop, self.num)


class SpectrumConfig(_Strict):
    omega: Axis


class MapConfig(_Strict):
    beta: Optional[float] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    omega_m: Axis = Axis(start=14.0, stop=26.0, num=121)
    phi_deg: Axis = Axis(start=-178.0, stop=180.0, num=180)

    def betas(self):
        b1 = self.beta1 if self.beta1 is not None else self.beta
        b2 = self.beta2 if self.beta2 is not None else self.beta
        return (0.0 if b1 is None else b1), (0.0 if b2 is None else b2)


class ContourConfig(_Strict):
    beta: float
    which: list[Literal["12", "21"]] = ["12", "21"]
    resolution: tuple[int, int] = (121, 181)
    refine_tol: float = 1e-6
    imag_tol: Optional[float] = None
    window_deg: Optional[tuple[float, float, float, float]] = None


class CriticalBetaConfig(_Strict):
    bracket: tuple[float, float] = (18.0, 28.0)
    omega_m_window: tuple[float, float] = (14.0, 26.0)
    tol: float = 1e-6


class GyrationConfig(_Strict):
    beta: float
    omega_m: list[float]
    tol: float = 1e-10
    n_scan: int = 721


class IsolationConfig(_Strict):
    beta: float
    omega_m: float
    phi_deg: Axis = Axis(start=-180.0, stop=180.0, num=181)
    threshold_db: float = 20.0


class AlphaConfig(_Strict):
    gamma0: Optional[float] = None


class OracleConfig(_Strict):
    omega: list[float]
    dt: Optional[float] = None
    settle_time: Optional[float] = None
    average_periods: int = 20


class PhiOffsetConfig(_Strict):
    phi_deg: list[float]
    contrast_db: list[float]


class CalibrateConfig(_Strict):
    fwd: Optional[str] = None
    bwd: Optional[str] = None
    ref_fwd: Optional[str] = None
    ref_bwd: Optional[str] = None
    format: Optional[Literal["A", "B"]] = None
    phi_offset: Optional[PhiOffsetConfig] = None


class OutputConfig(_Strict):
    path: Optional[str] = None
    format: Literal["csv"] = "csv"


class RunConfig(_Strict):
    device: DeviceConfig = Field(default_factory=lambda: DeviceConfig(preset="table-s1"))
    modulation: ModulationConfig = Field(default_factory=ModulationConfig)
    truncation: TruncationConfig = Field(default_factory=TruncationConfig)
    spectrum: Optional[SpectrumConfig] = None
    map: Optional[MapConfig] = None
    contour: Optional[ContourConfig] = None
    critical_beta: Optional[CriticalBetaConfig] = None
    gyration: Optional[GyrationConfig] = None
    isolation: Optional[IsolationConfig] = None
    alpha: Optional[AlphaConfig] = None
    oracle: Optional[OracleConfig] = None
    calibrate: Optional[CalibrateConfig] = None
    output: OutputConfig = Field(default_factory=OutputConfig)

    def resolved(self) -> dict:
        """Config with defaults filled and the device expanded to explicit values."""
        data = self.model_dump(mode="json")
        chain = self.device.build()
        data["device"] = {
            "site1": dict(chain.site1.__dict__),
            "site2": dict(chain.site2.__dict__),
            "lambda_static": chain.lambda_static,
        }
        data["output"].pop("path", None)
        return data


def _set_path(data: dict, dotted: str, raw: str):
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ValueError(f"cannot set {dotted!r}: {key!r} is not a section")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node[keys[-1]] = value


def load_config(path=None, overrides=(), preset=None) -> RunConfig:
    """Read a JSON config, apply ``key.path=value`` overrides, validate."""
    data = json.loads(Path(path).read_text()) if path else {}
    if preset is not None:
        data["device"] = {"preset": preset}
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} must look like key.path=value")
        _set_path(data, key.strip(), raw.strip())
    cfg = RunConfig.model_validate(data)
    cfg.device.build()  # physical validation with field paths in the message
    return cfg


def deg_axis_to_rad(axis: Axis) -> np.ndarray:
    return np.radians(axis.values())


def fmt(x) -> str:
    """12 significant digits, scientific."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.11e}"
