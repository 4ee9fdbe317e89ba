"""JSON formats for systems, frames, extension specs and reports."""
from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DimensionMismatch, SystemDefinitionError
from .extension import ExtensionSpec
from .models import LorentzMetric
from .symbol import Frame, SystemDefinition

SCHEMA_VERSION = "1.0"


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SystemDefinitionError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SystemDefinitionError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SystemDefinitionError(f"{path} must contain a JSON object")
    return data


def _require(data: dict, keys, what: str):
    missing = [k for k in keys if k not in data]
    if missing:
        raise SystemDefinitionError(f"{what} is missing fields: {', '.join(missing)}")


def system_to_dict(sys: SystemDefinition, metric: LorentzMetric | None = None) -> dict:
    """Flat row-major tensors; ``symbol[A, a, alpha]`` and ``constraint_proj[Gamma, a, A]``."""
    out = {
        "schema_version": SCHEMA_VERSION,
        "name": sys.name,
        "n_dim": sys.n_dim,
        "num_vars": sys.num_vars,
        "num_eqs": sys.num_eqs,
        "num_constraints": sys.num_constraints,
        "var_names": list(sys.var_names),
        "symbol": sys.symbol.ravel().tolist(),
        "constraint_proj": sys.constraint_proj.ravel().tolist(),
        "source": sys.source.tolist(),
        "condition3": sys.condition3,
    }
    if metric is not None:
        out["metric"] = metric.inverse_components.ravel().tolist()
    return out


def system_from_dict(data: dict) -> tuple[SystemDefinition, LorentzMetric | None]:
    _require(data, ("name", "n_dim", "num_vars", "num_eqs", "num_constraints",
                    "symbol", "constraint_proj"), "system")
    nd, nv, ne, ng = (int(data[k]) for k in ("n_dim", "num_vars", "num_eqs", "num_constraints"))
    if ne != nv + ng:
        raise SystemDefinitionError(
            f"|A| = |alpha| + |Gamma| violated: num_eqs = {ne}, num_vars + num_constraints = {nv + ng}")
    sym = np.asarray(data["symbol"], dtype=float)
    cp = np.asarray(data["constraint_proj"], dtype=float)
    if sym.size != ne * nd * nv:
        raise DimensionMismatch(f"symbol has {sym.size} entries, expected {ne}*{nd}*{nv}")
    if cp.size != ng * nd * ne:
        raise DimensionMismatch(f"constraint_proj has {cp.size} entries, expected {ng}*{nd}*{ne}")
    metric = None
    if data.get("metric") is not None:
        metric = LorentzMetric(np.asarray(data["metric"], dtype=float).reshape(nd, nd))
    sys = SystemDefinition(
        name=str(data["name"]),
        symbol=sym.reshape(ne, nd, nv),
        constraint_proj=cp.reshape(ng, nd, ne),
        source=data.get("source"),
        # a file cannot vouch for the integrability condition; only built-ins can
        condition3="unverified",
        var_names=tuple(data.get("var_names", ())),
    )
    return sys, metric


def load_system(path) -> tuple[SystemDefinition, LorentzMetric | None]:
    return system_from_dict(_read_json(path))


def load_frame(path) -> Frame:
    data = _read_json(path)
    _require(data, ("n_cov", "t_vec", "k_basis"), "frame")
    try:
        return Frame(data["n_cov"], data["t_vec"], data["k_basis"])
    except ValueError as exc:
        raise SystemDefinitionError(f"invalid frame: {exc}") from None


def extension_from_dict(data: dict, n_dim: int = 4) -> ExtensionSpec:
    """``mode``, flat ``metrics`` (one list of n_dim^2 entries each), ``speeds``, ``damping``.

    A covariant spec given only ``speeds`` uses ``diag(-1, c^2, ...)`` metrics.
    """
    mode = data.get("mode", "covariant_metrics")
    damping = float(data.get("damping", 0.0))
    speeds = tuple(data.get("speeds", ()))
    if mode == "covariant_metrics" and not data.get("metrics"):
        if not speeds:
            raise SystemDefinitionError("covariant extension needs metrics or speeds")
        return ExtensionSpec.cleaning_speeds(speeds, n_dim, damping)
    metrics = []
    for m in data.get("metrics", ()):
        arr = np.asarray(m, dtype=float)
        if arr.size != n_dim * n_dim:
            raise DimensionMismatch(f"metric block has {arr.size} entries, expected {n_dim ** 2}")
        metrics.append(arr.reshape(n_dim, n_dim))
    return ExtensionSpec(mode, tuple(metrics), speeds, damping)


def load_extension(path, n_dim: int = 4) -> ExtensionSpec:
    return extension_from_dict(_read_json(path), n_dim)


def envelope(command: str, body: dict, settings: dict) -> dict:
    """Report wrapper; ``timestamp`` is the only field that differs between identical runs."""
    return {"schema_version": SCHEMA_VERSION, "tool": "hypext", "tool_version": __version__,
            "command": command, "settings": settings, "timestamp":
            datetime.now(timezone.utc).isoformat(timespec="seconds"), **body}


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(obj):
    # JSON has no NaN/inf: report them as null
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_finite(report), indent=2, default=_default, allow_nan=False) + "\n"
