"""Command-line front end: strict JSON configs, task orchestration and reproducible outputs.

    vqemit polaron  --config cfg.json --out runs/sweep
    vqemit spectrum --config cfg.json --out runs/spec --override model.g=0.4
    vqemit quench   --config cfg.json --out runs/q1 --seed 7
    vqemit oracle   --out runs/oracle --override model.n_sites=6 --override numerics.n_max=2
    vqemit report   runs/q1
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .model import ModelError, ModelParams, decay_time_tau
from .mps import product_state, save_mps
from .oracle import ed_sector_spectra
from .polaron import polaron_record, solve_polaron
from .quench import (
    Numerics,
    QuenchSchedule,
    WindowError,
    channel_decomposition,
    coupling_protocol,
    detuning_protocol,
    evolve,
    qubit_series_checks,
)
from .spectrum import bound_states, find_eigenstate

log = logging.getLogger("vqemit")

TASKS = ("polaron-sweep", "spectrum", "quench", "oracle-check")
SUBCOMMAND_TASK = {"polaron": "polaron-sweep", "spectrum": "spectrum", "quench": "quench", "oracle": "oracle-check"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class ModelSection(_Strict):
    omega: float = Field(1.0, gt=0)
    j_hop: float = Field(0.4, gt=0)
    n_sites: int = Field(400, ge=2, le=4096)
    delta: float = Field(0.3, ge=0)
    g: float = Field(0.5, ge=0)
    qubit_site: int | None = Field(None, ge=0)


class NumericsSection(_Strict):
    n_max: int = Field(5, ge=1, le=30)
    d_max: int = Field(20, ge=1, le=1024)
    svd_tol: float = Field(1e-10, gt=0, lt=1)
    dt: float = Field(0.05, gt=0)
    trotter_order: Literal[2, 4] = 2
    energy_tol: float = Field(1e-7, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)


class ScheduleSection(_Strict):
    protocol: Literal["coupling", "detuning", "custom"] = "coupling"
    t_off: float | None = Field(None, gt=0)
    t_end: float = Field(..., gt=0)
    delta_far: float = Field(10.0, ge=0)
    segments: list[list[float]] | None = None

    @model_validator(mode="after")
    def _check(self):
        if self.protocol == "custom":
            if not self.segments:
                raise ValueError("custom protocol needs segments [[t_start, g, delta], ...]")
            if any(len(s) != 3 for s in self.segments):
                raise ValueError("each segment is [t_start, g, delta]")
        else:
            if self.segments is not None:
                raise ValueError(f"segments are only allowed with protocol 'custom', not {self.protocol!r}")
            if self.t_off is None:
                raise ValueError(f"protocol {self.protocol!r} needs t_off")
            if self.t_off >= self.t_end:
                raise ValueError("t_off must be before t_end")
        return self


class SweepSection(_Strict):
    g_values: list[float] = Field(default_factory=lambda: [round(0.05 * i, 10) for i in range(11)])
    boundary: Literal["periodic", "open"] = "periodic"

    @model_validator(mode="after")
    def _check(self):
        if not self.g_values or any(g < 0 for g in self.g_values):
            raise ValueError("g_values must be a non-empty list of non-negative couplings")
        return self


class SpectrumSection(_Strict):
    states: list[Literal["GS", "E1", "E2"]] = Field(default_factory=lambda: ["GS", "E1", "E2"])
    n_cut: int = Field(8, ge=1, le=64)
    checkpoint: bool = True


class QuenchSection(_Strict):
    sample_every: int = Field(10, ge=1)
    snapshot_times: list[float] = Field(default_factory=list)
    pair_factor: float = Field(2.0, gt=0)
    qubit_checks: bool = True


class OracleSection(_Strict):
    g_values: list[float] = Field(default_factory=lambda: [0.1, 0.3])
    energy_tol: float = Field(1e-6, gt=0)
    polaron_gap: float = Field(5e-3, gt=0)


class RunConfig(_Strict):
    task: Literal["polaron-sweep", "spectrum", "quench", "oracle-check"]
    model: ModelSection = ModelSection()
    numerics: NumericsSection = NumericsSection()
    schedule: ScheduleSection | None = None
    sweep: SweepSection = SweepSection()
    spectrum: SpectrumSection = SpectrumSection()
    quench: QuenchSection = QuenchSection()
    oracle: OracleSection = OracleSection()
    output_dir: str = "vqemit-out"

    @model_validator(mode="after")
    def _check(self):
        if self.task == "quench" and self.schedule is None:
            raise ValueError("schedule: required for task 'quench'")
        return self

    def model_params(self) -> ModelParams:
        try:
            return ModelParams(**self.model.model_dump())
        except ModelError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def numerics_obj(self) -> Numerics:
        return Numerics(**self.numerics.model_dump())

    def quench_schedule(self) -> QuenchSchedule:
        s, m = self.schedule, self.model
        dt = self.numerics.dt
        try:
            if s.protocol == "coupling":
                sched = coupling_protocol(m.g, m.delta, s.t_off, s.t_end, dt)
            elif s.protocol == "detuning":
                sched = detuning_protocol(m.g, s.delta_far, m.delta, s.t_off, s.t_end, dt)
            else:
                sched = QuenchSchedule(tuple(s.segments), s.t_end, dt)
            sched.validate_for(self.model_params())
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from exc
        return sched


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        msg = err["msg"].removeprefix("Value error, ")
        path = ".".join(str(p) for p in err["loc"])
        lines.append(f"{path}: {msg}" if path else msg)
    return "; ".join(lines)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    doc = json.loads(json.dumps(doc))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {p} is not a section")
        node[parts[-1]] = _parse_value(value)
    return doc


def parse_config(text: str | dict, overrides=()) -> RunConfig:
    """Validated config from a JSON document; errors name the offending path."""
    if isinstance(text, dict):
        doc = text
    else:
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc = apply_overrides(doc, overrides)
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None
    cfg.model_params()
    if cfg.schedule is not None:
        cfg.quench_schedule()
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def atomic_write(path: Path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(header, rows) -> str:
    """CSV with 17 significant digits and a '.' decimal separator."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


class Outputs:
    """Tracks written files and their hashes for the manifest."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, name: str, data: bytes | str) -> None:
        raw = data.encode() if isinstance(data, str) else data
        atomic_write(self.root / name, raw)
        self.files[name] = hashlib.sha256(raw).hexdigest()

    def manifest(self, cfg: RunConfig, complete: bool, extra=None, error=None) -> None:
        doc = {
            "version": __version__,
            "task": cfg.task,
            "config": cfg.model_dump(mode="json"),
            "model": cfg.model_params().as_dict(),
            "numerics": cfg.numerics.model_dump(mode="json"),
            "seed": cfg.numerics.seed,
            "numba": _numba_state(),
            "complete": complete,
            "files": dict(sorted(self.files.items())),
        }
        if extra:
            doc["results"] = extra
        if error:
            doc["error"] = error
        atomic_write(self.root / "manifest.json", _json(doc))


def _numba_state() -> dict:
    from . import _accel

    return {"installed": _accel.NUMBA_INSTALLED, "active": _accel.use_numba()}


def worker_count() -> int:
    env = os.environ.get("VQ_THREADS")
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            log.warning("ignoring non-integer VQ_THREADS=%r", env)
    return cpus


# ---------------------------------------------------------------------------
# tasks


def _sweep_point(args):
    params, boundary = args
    return polaron_record(solve_polaron(params, boundary=boundary))


def run_polaron_sweep(cfg: RunConfig, out: Outputs) -> dict:
    base = cfg.model_params()
    points = [(base.replace(g=g), cfg.sweep.boundary) for g in cfg.sweep.g_values]
    workers = min(worker_count(), len(points))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_sweep_point, points))
    else:
        records = [_sweep_point(p) for p in points]
    cols = ["g", "delta_r", "p_e", "e_gs", "e1", "e2", "fidelity"]
    out.write("polaron.csv", format_csv(cols, [[r[c] for c in cols] for r in records]))
    return {"points": len(records)}


def _eigen_records(cfg: RunConfig, params: ModelParams, wanted) -> dict:
    num = cfg.numerics
    kw = dict(energy_tol=num.energy_tol, svd_tol=num.svd_tol, seed=num.seed)
    recs = {}
    if "GS" in wanted or "E2" in wanted:
        recs["GS"] = find_eigenstate(params, num.n_max, num.d_max, 1, label="GS", **kw)
    if "E1" in wanted:
        recs["E1"] = find_eigenstate(params, num.n_max, num.d_max, -1, label="E1", **kw)
    if "E2" in wanted:
        recs["E2"] = find_eigenstate(params, num.n_max, num.d_max, 1, orthogonal_to=[recs["GS"].state],
                                     label="E2", **kw)
    return recs


def run_spectrum(cfg: RunConfig, out: Outputs) -> dict:
    params = cfg.model_params()
    recs = _eigen_records(cfg, params, cfg.spectrum.states)
    recs = {k: recs[k] for k in cfg.spectrum.states}
    summary = {k: r.summary() for k, r in recs.items()}
    out.write("eigen.json", _json(summary))
    x = np.arange(params.n_sites)
    rows = np.column_stack([x] + [r.n_x_profile for r in recs.values()])
    out.write("profiles.csv", format_csv(["x"] + list(recs), [[int(r[0]), *r[1:]] for r in rows]))
    if cfg.spectrum.checkpoint:
        for k, r in recs.items():
            save_mps(out.root / f"{k}.vqmps", r.state)
            out.files[f"{k}.vqmps"] = hashlib.sha256((out.root / f"{k}.vqmps").read_bytes()).hexdigest()
    return {k: r.energy for k, r in recs.items()}


def run_quench(cfg: RunConfig, out: Outputs) -> dict:
    params = cfg.model_params()
    sched = cfg.quench_schedule()
    num = cfg.numerics_obj()
    qc = cfg.quench
    eig_cache: dict = {}

    def eigs_for(seg_params):
        key = (seg_params.g, seg_params.delta)
        if key not in eig_cache:
            eig_cache[key] = bound_states(seg_params, num.n_max, num.d_max, seed=num.seed,
                                          energy_tol=num.energy_tol, svd_tol=num.svd_tol)
        return eig_cache[key]

    def snapshot(t, state, seg_params):
        e = eigs_for(seg_params)
        rec = channel_decomposition(state, e["GS"], e["E1"], e["E2"], seg_params, t, qc.pair_factor)
        d = rec.as_dict()
        d["n1"] = rec.n1
        d["n2"] = rec.n2
        return d

    series = evolve(product_state(params, num.n_max, d_max=num.d_max), sched, params, num,
                    sample_every=qc.sample_every, snapshot_times=qc.snapshot_times, snapshot_fn=snapshot)

    n = params.n_sites
    out.write("nx.csv", format_csv(["t"] + [f"x{i}" for i in range(n)],
                                   [[t, *row] for t, row in zip(series.times, series.n_x)]))
    out.write("scalars.csv", format_csv(
        ["t", "p_qb", "energy", "parity", "norm_correction"],
        zip(series.times, series.p_qb, series.energy, series.parity, series.norm_correction),
    ))
    checks = None
    s = cfg.schedule
    if qc.qubit_checks and s.protocol == "coupling" and cfg.model.g > 0:
        tau = decay_time_tau(params)
        e = eigs_for(params)
        try:
            checks = qubit_series_checks(series, e["GS"], e["E2"], s.t_off, tau if tau is not None else 0.0)
        except WindowError as exc:
            checks = {"error": str(exc)}
    out.write("channels.json", _json({"snapshots": series.channel_weights, "qubit_checks": checks}))
    return {
        "samples": int(series.times.size),
        "max_parity_deviation": float(np.max(np.abs(series.parity - 1.0))),
        "final_norm_correction": float(series.norm_correction[-1]),
        "saturation_time": series.saturation_time,
    }


def run_oracle(cfg: RunConfig, out: Outputs) -> dict:
    base = cfg.model_params()
    num = cfg.numerics
    tol = cfg.oracle.energy_tol
    report = []
    ok = True
    for g in cfg.oracle.g_values:
        params = base.replace(g=g)
        ed = ed_sector_spectra(params, num.n_max, n_levels=2)
        recs = _eigen_records(cfg, params, ("GS", "E1", "E2"))
        pol = solve_polaron(params, boundary="open")
        ed_gs = float(min(ed[1][0], ed[-1][0]))
        deltas = {
            "GS": recs["GS"].energy - float(ed[1][0]),
            "E1": recs["E1"].energy - float(ed[-1][0]),
            "E2": recs["E2"].energy - float(ed[1][1]),
        }
        gap = pol.e_gs - ed_gs
        entry = {
            "g": g,
            "ed": {"even": ed[1], "odd": ed[-1]},
            "mps": {k: r.energy for k, r in recs.items()},
            "mps_minus_ed": deltas,
            "polaron_e_gs": pol.e_gs,
            "polaron_gap": gap,
            "mps_ok": all(abs(v) <= tol for v in deltas.values()),
            "polaron_ok": -1e-12 <= gap <= cfg.oracle.polaron_gap,
        }
        ok &= entry["mps_ok"] and entry["polaron_ok"]
        report.append(entry)
    out.write("oracle.json", _json({"tolerance": tol, "polaron_gap_max": cfg.oracle.polaron_gap,
                                    "all_ok": ok, "points": report}))
    return {"all_ok": ok}


RUNNERS = {
    "polaron-sweep": run_polaron_sweep,
    "spectrum": run_spectrum,
    "quench": run_quench,
    "oracle-check": run_oracle,
}


def run(cfg: RunConfig, out_dir: str | Path | None = None) -> int:
    """Execute a task; returns the process exit status."""
    out = Outputs(out_dir or cfg.output_dir)
    out.manifest(cfg, complete=False)
    try:
        results = RUNNERS[cfg.task](cfg, out)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        record = {"type": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        out.manifest(cfg, complete=False, error=record)
        print(json.dumps({"error": record["type"], "message": record["message"]}), file=sys.stderr)
        return 1
    out.manifest(cfg, complete=True, extra=results)
    if cfg.task == "oracle-check" and not results.get("all_ok", True):
        return 3
    return 0


def report(out_dir: str | Path) -> int:
    """Print the manifest summary and verify file hashes."""
    root = Path(out_dir)
    try:
        man = json.loads((root / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "ManifestError", "message": str(exc)}), file=sys.stderr)
        return 1
    bad = []
    for name, digest in man.get("files", {}).items():
        path = root / name
        if not path.exists() or hashlib.sha256(path.read_bytes()).hexdigest() != digest:
            bad.append(name)
    print(f"task      {man['task']}")
    print(f"version   {man['version']}")
    print(f"complete  {man['complete']}")
    print("model     " + ", ".join(f"{k}={v}" for k, v in man["model"].items()))
    for name in man.get("files", {}):
        print(f"  {name:<16}{'MODIFIED' if name in bad else 'ok'}")
    for k, v in (man.get("results") or {}).items():
        print(f"  {k} = {v}")
    if "error" in man:
        print(f"error     {man['error']['type']}: {man['error']['message']}")
    return 0 if man["complete"] and not bad else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vqemit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_TASK:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="seed (overrides numerics.seed)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config key, value parsed as JSON; repeatable")
    rp = sub.add_parser("report")
    rp.add_argument("out_dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        return report(args.out_dir)
    task = SUBCOMMAND_TASK[args.command]
    try:
        doc = json.loads(Path(args.config).read_text()) if args.config else {}
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        if doc.get("task", task) != task:
            raise ConfigError(f"task: config says {doc['task']!r} but subcommand runs {task!r}")
        doc["task"] = task
        overrides = list(args.override)
        if args.seed is not None:
            overrides.append(f"numerics.seed={args.seed}")
        cfg = parse_config(doc, overrides)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(json.dumps({"error": "ConfigError", "message": str(exc)}), file=sys.stderr)
        return 2
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
