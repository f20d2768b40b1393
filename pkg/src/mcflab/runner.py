"""Run orchestration: output directories, manifests and parameter sweeps."""

from __future__ import annotations

import time
import traceback
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, store
from .config import ConfigError, ExperimentConfig, config_hash, set_path
from .experiments import DRIVERS, parallel_map


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def resolve_output(cfg: ExperimentConfig, root: Path | None = None) -> Path:
    root = store.output_root() if root is None else Path(root)
    return root / cfg.raw.get("output_dir", cfg.name)


def run(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """Execute one experiment and write its manifest; returns the manifest dict.

    ``status`` is ``pass``, ``fail`` (a check failed) or ``error`` (the run
    raised); configuration errors found during the run propagate as
    :class:`ConfigError`.
    """
    if cfg.experiment == "sweep":
        return sweep(cfg, out)
    out = resolve_output(cfg) if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    store.write_json(out / "config.json", cfg.raw)
    started, t0 = _now(), time.perf_counter()
    manifest = {"config_hash": cfg.hash, "version": __version__, "experiment": cfg.experiment, "started": started}
    try:
        result = DRIVERS[cfg.experiment](cfg, out)
    except ConfigError:
        raise
    except Exception as exc:  # recorded in the manifest, mapped to a runtime-error exit code by the CLI
        manifest.update(status="error", error=f"{type(exc).__name__}: {exc}", traceback=traceback.format_exc(), checks=[])
    else:
        checks = [{"check": r["check"], "pass": r["pass"], "margin": r["margin"],
                   "applicable": r.get("applicable", True)} for r in result["reports"]]
        ok = all(c["pass"] for c in checks if c["applicable"])
        manifest.update(status="pass" if ok else "fail", checks=checks)
    manifest.update(finished=_now(), wall_seconds=time.perf_counter() - t0, files=store.inventory(out))
    store.write_json(out / "manifest.json", manifest)
    return manifest


def _sweep_member(raw: dict, out: str) -> dict:
    return run(ExperimentConfig.from_dict(raw), Path(out))


def sweep(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """Run the base config once per value of ``sweep.parameter`` (a dotted path)."""
    spec = cfg.raw["sweep"]
    out = resolve_output(cfg) if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    members = []
    for i, value in enumerate(spec["values"]):
        raw = set_path(spec["base"], spec["parameter"], value)
        raw.setdefault("seed", cfg.seed)
        if raw.get("experiment") == "sweep":
            raise ConfigError([("/sweep/base/experiment", "sweeps cannot be nested")])
        try:
            ExperimentConfig.from_dict(raw)
        except ConfigError as exc:
            raise ConfigError([(f"/sweep/base{p}" if p != "/" else "/sweep/base", m) for p, m in exc.errors]) from None
        members.append((raw, str(out / f"{i:03d}")))
    started, t0 = _now(), time.perf_counter()
    results = parallel_map(_sweep_member, members, cfg.workers)
    rows = [{"index": i, "value": v, "status": m["status"], "config_hash": config_hash(raw)}
            for i, ((raw, _), v, m) in enumerate(zip(members, spec["values"], results))]
    store.write_json(out / "sweep.json", {"parameter": spec["parameter"], "members": rows})
    statuses = {r["status"] for r in rows}
    status = "error" if "error" in statuses else ("fail" if "fail" in statuses else "pass")
    manifest = {
        "config_hash": cfg.hash, "version": __version__, "experiment": "sweep", "started": started,
        "finished": _now(), "wall_seconds": time.perf_counter() - t0, "status": status,
        "checks": [{"check": f"member_{r['index']:03d}", "pass": r["status"] == "pass", "margin": None,
                    "applicable": True} for r in rows],
        "files": store.inventory(out),
    }
    store.write_json(out / "manifest.json", manifest)
    return manifest
