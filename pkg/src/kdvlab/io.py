"""JSON report files, CSV output and plot-data projection."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import enum
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A report file does not have the expected structure."""


def code_version():
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def to_jsonable(obj):
    """Plain JSON types; complex -> {"re", "im"}, non-finite floats -> None."""
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def build_payload(name, report, config: dict, grid=None, seed=None, timestamp=None):
    ts = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat()
    return {
        "schema_version": SCHEMA_VERSION,
        "name": name,
        "params": to_jsonable(config),
        "grid": to_jsonable(grid),
        "report": to_jsonable(report),
        "provenance": {
            "code_version": code_version(),
            "seed": seed,
            "config": to_jsonable(config),
            "timestamp": ts,
        },
    }


def dumps(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _fresh_path(outdir: Path, stem: str, suffix: str) -> Path:
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    base = f"{stem}-{stamp}"
    path = outdir / f"{base}{suffix}"
    k = 1
    while path.exists():
        path = outdir / f"{base}-{k}{suffix}"
        k += 1
    return path


def write_text_new(outdir, stem, suffix, text) -> Path:
    """Write to a timestamped file that did not exist before."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    while True:
        path = _fresh_path(outdir, stem, suffix)
        try:
            with open(path, "x", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            return path
        except FileExistsError:
            continue


def write_report(outdir, name, report, config, grid=None, seed=None, stem=None) -> Path:
    """Write the payload to <outdir>/<stem>-<timestamp>.json; stem defaults to name."""
    payload = build_payload(name, report, config, grid, seed)
    return write_text_new(outdir, stem or name, ".json", dumps(payload))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def write_csv_new(outdir, stem, header, rows) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = _fresh_path(outdir, stem, ".csv")
    return write_csv(path, header, rows)


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    _need(payload, "schema_version", int)
    if payload["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"schema_version: expected {SCHEMA_VERSION}, got {payload['schema_version']}")
    _need(payload, "name", str)
    _need(payload, "report", (dict, list))
    return payload


def _need(obj, key, kind, path=""):
    where = f"{path}.{key}" if path else key
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing")
    if not isinstance(obj[key], kind):
        raise SchemaError(f"{where}: expected {kind}, got {type(obj[key]).__name__}")
    return obj[key]


def _series(report, key, path):
    vals = _need(report, key, list, path)
    return [float("nan") if v is None else v for v in vals]


def plot_curves(payload) -> dict:
    """Map curve name -> (header, rows) for a loaded report."""
    name = payload["name"]
    rep = payload["report"]
    curves = {}
    if name == "stability":
        t = _series(rep, "times", "report")
        ratios = _need(rep, "ratios", dict, "report")
        for seed, r in ratios.items():
            if len(r) != len(t):
                raise SchemaError(f"report.ratios.{seed}: length {len(r)} != len(report.times) {len(t)}")
            curves[f"ratio_{seed}"] = (["t", "ratio"], list(zip(t, r)))
    elif name == "decay":
        t = _series(rep, "times", "report")
        ly = _series(rep, "log_norm", "report")
        fit = _series(rep, "fit", "report")
        curves["decay"] = (["t", "log_norm", "fit"], list(zip(t, ly, fit)))
    elif name == "pseudospec":
        re = _series(rep, "re", "report")
        im = _series(rep, "im", "report")
        s = _need(rep, "sigma_min", list, "report")
        rows = [(x, y, s[i][j]) for i, y in enumerate(im) for j, x in enumerate(re)]
        curves["pseudospec"] = (["re_z", "im_z", "sigma_min"], rows)
    elif name == "evans":
        smp = _need(rep, "samples", list, "report")
        rows = []
        for k, s in enumerate(smp):
            lam = _need(s, "lam", list, f"report.samples[{k}]")
            E = _need(s, "E", list, f"report.samples[{k}]")
            rows.append((lam[0], lam[1], math.hypot(*E)))
        curves["evans_abs"] = (["re", "im", "abs_E"], rows)
    elif name in ("smoothing", "free-smoothing"):
        reps = rep if isinstance(rep, list) else [rep]
        for k, r in enumerate(reps):
            T = _series(r, "T_ladder", f"report[{k}]")
            S = _series(r, "partial_integrals", f"report[{k}]")
            tag = f"{r.get('seed', k)}_{r.get('branch', '')}_d{int(bool(r.get('derivative')))}"
            w = r.get("weight", {})
            if "alpha" in w:
                tag += f"_a{w['alpha']}"
            curves[f"smoothing_{tag}"] = (["T", "S"], list(zip(T, S)))
    elif name in ("wave-op", "inverse-wave"):
        cps = _series(rep, "checkpoints", "report")
        inc = _series(rep, "increments", "report")
        curves["increments"] = (["t", "increment"], list(zip(cps[1:], inc)))
        if rep.get("integrand"):
            curves["cook_integrand"] = (
                ["t", "value"],
                list(zip(_series(rep, "integrand_times", "report"), _series(rep, "integrand", "report"))),
            )
    elif name == "evolve":
        t = _series(rep, "norm_times", "report")
        n = _series(rep, "norms", "report")
        curves["norm"] = (["t", "norm"], list(zip(t, n)))
    elif name == "eigen-scan":
        ev = _need(rep, "eigenvalues", dict, "report")
        for n, d in ev.items():
            re = _series(d, "re", f"report.eigenvalues.{n}")
            im = _series(d, "im", f"report.eigenvalues.{n}")
            curves[f"eigenvalues_N{n}"] = (["re", "im"], list(zip(re, im)))
    else:
        raise SchemaError(f"name: no plot projection for report kind {name!r}")
    return curves


def _safe(s):
    return "".join(ch if ch.isalnum() or ch in "-_.=+" else "_" for ch in str(s))


def emit_plotdata(report_path, outdir=None) -> list:
    """Write one CSV per curve of a saved report; returns the paths."""
    report_path = Path(report_path)
    payload = load_report(report_path)
    outdir = Path(outdir) if outdir else report_path.parent
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for curve, (header, rows) in plot_curves(payload).items():
        paths.append(write_csv(outdir / f"{report_path.stem}.{_safe(curve)}.csv", header, rows))
    return paths
