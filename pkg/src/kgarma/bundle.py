"""Versioned text persistence of fitted models.

Bundles are JSON documents. Floats are written with 17 significant digits,
which reproduces every IEEE double exactly on reload.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Dict, Optional

import numpy as np

from . import __version__
from .errors import DataError
from .gegenbauer import GarmaModel, GegenbauerFactor
from .ggarch import GGarchModel
from .llwnn import LlwnnModel
from .timeseries import MinMaxScaler, format_float

__all__ = ["SCHEMA_VERSION", "SeriesInfo", "ModelBundle", "dumps", "save_bundle", "load_bundle", "sha256_of"]

SCHEMA_VERSION = 1


def _encode(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise DataError(f"cannot store non-finite value {obj!r}")
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items())
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with 17-significant-digit floats."""
    return _encode(obj) + "\n"


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class SeriesInfo:
    """Sampling grid of the series a bundle was fitted on."""

    start: datetime
    step: timedelta
    length: int

    @property
    def end(self) -> datetime:
        return self.start + (self.length - 1) * self.step


@dataclass(frozen=True)
class ModelBundle:
    garma: Optional[GarmaModel] = None
    ggarch: Optional[GGarchModel] = None
    llwnn: Optional[LlwnnModel] = None
    scaler: Optional[MinMaxScaler] = None
    series: Optional[SeriesInfo] = None
    garma_truncation: int = 2000
    name: str = ""
    provenance: Dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def variance_kind(self) -> Optional[str]:
        if self.ggarch is not None:
            return "ggarch"
        if self.llwnn is not None:
            return "llwnn"
        return None

    def to_dict(self) -> dict:
        out: Dict[str, Any] = {"schema_version": self.schema_version, "kgarma_version": __version__,
                               "name": self.name}
        if self.garma is not None:
            g = self.garma
            out["garma"] = {
                "mu": g.mu, "ar": list(g.ar), "ma": list(g.ma), "sigma2": g.sigma2,
                "factors": [{"d": f.d, "nu": f.nu} for f in g.factors],
                "truncation": self.garma_truncation,
            }
        else:
            out["garma"] = None
        if self.ggarch is not None:
            m = self.ggarch
            out["ggarch"] = {
                "gamma": m.gamma, "beta": list(m.beta), "psi": list(m.psi),
                "variance_factors": [{"d": f.d, "nu": f.nu} for f in m.variance_factors],
                "tau": m.tau, "season_length": m.season_length, "truncation": m.truncation,
                "innovation": m.innovation,
            }
        else:
            out["ggarch"] = None
        if self.llwnn is not None:
            if self.scaler is None:
                raise DataError("an LLWNN bundle needs its scaler")
            n = self.llwnn
            out["llwnn"] = {
                "mother_wavelet": n.mother_wavelet, "scales": n.scales, "translations": n.translations,
                "weights": n.weights, "scaler": {"y_min": self.scaler.y_min, "y_max": self.scaler.y_max},
            }
        else:
            out["llwnn"] = None
        if self.series is not None:
            s = self.series
            out["series"] = {"start": s.start.isoformat(), "step_seconds": s.step.total_seconds(),
                             "length": s.length}
        else:
            out["series"] = None
        out["provenance"] = self.provenance
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelBundle":
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported bundle schema_version {version!r} (expected {SCHEMA_VERSION})")
        try:
            garma = trunc = None
            if doc.get("garma") is not None:
                g = doc["garma"]
                garma = GarmaModel(float(g["mu"]), tuple(g["ar"]), tuple(g["ma"]),
                                   tuple(GegenbauerFactor(float(f["d"]), float(f["nu"])) for f in g["factors"]),
                                   float(g["sigma2"]))
                trunc = int(g["truncation"])
            ggarch = None
            if doc.get("ggarch") is not None:
                m = doc["ggarch"]
                ggarch = GGarchModel(float(m["gamma"]), tuple(m["beta"]), tuple(m["psi"]),
                                     tuple(GegenbauerFactor(float(f["d"]), float(f["nu"]))
                                           for f in m["variance_factors"]),
                                     float(m["tau"]), int(m["season_length"]), int(m["truncation"]),
                                     m["innovation"])
            llwnn = scaler = None
            if doc.get("llwnn") is not None:
                n = doc["llwnn"]
                llwnn = LlwnnModel(np.array(n["scales"], dtype=float), np.array(n["translations"], dtype=float),
                                   np.array(n["weights"], dtype=float), n["mother_wavelet"])
                scaler = MinMaxScaler(float(n["scaler"]["y_min"]), float(n["scaler"]["y_max"]))
            series = None
            if doc.get("series") is not None:
                s = doc["series"]
                series = SeriesInfo(datetime.fromisoformat(s["start"]), timedelta(seconds=s["step_seconds"]),
                                    int(s["length"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed bundle: missing or invalid field {exc}") from exc
        return cls(garma, ggarch, llwnn, scaler, series, trunc or 2000, doc.get("name", ""),
                   dict(doc.get("provenance") or {}), version)


def save_bundle(bundle: ModelBundle, path) -> None:
    text = dumps(bundle.to_dict())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_bundle(path) -> ModelBundle:
    if not os.path.exists(path):
        raise DataError(f"bundle not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a valid bundle ({exc})") from exc
    if not isinstance(doc, dict):
        raise DataError(f"{path}: not a valid bundle")
    return ModelBundle.from_dict(doc)
