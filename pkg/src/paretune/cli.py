"""``paretune`` command line: tune, partition, predict."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .accuracy import (
    AccuracySpec,
    Combined,
    Split,
    SurrogateModel,
    TabulatedModel,
    estimate_errors,
    extract_frontier,
    partition_space,
)
from .errors import ConfigError, EmptyAccurateSubspace, MissingCoverage, ParetuneError, SamplerFailure
from .modeling import build_perf_model, predict_detail, rank_frontier, require_coverage
from .param_space import (
    VARIANTS,
    Configuration,
    GridSize,
    Interfacial,
    ParameterRanges,
    SystemDescription,
    build_search_space,
)
from .sampling import (
    AdaptiveParams,
    ExternalCommandSampler,
    Phase,
    RecordingSampler,
    SampleRecord,
    sample_subspace,
)
from .synth_sim import SynthParams, SyntheticSampler

log = logging.getLogger("paretune")

SCHEMA = 1
EXIT_CONFIG, EXIT_EMPTY, EXIT_SAMPLER = 2, 3, 4
SAMPLES_HEADER = ["alpha", "cutoff", "order", "nx", "ny", "nz", "phase", "seconds"]
FRONTIER_HEADER = ["rank", "predicted_seconds", "alpha", "cutoff", "order", "nx", "ny", "nz", "extrapolated"]
SUBSPACE_HEADER = ["cutoff", "nx", "ny", "nz", "order", "alpha_lo", "alpha_hi", "on_frontier"]


@dataclass
class TuneConfig:
    system: SystemDescription
    ranges: ParameterRanges
    accuracy: AccuracySpec
    sampler: dict
    adaptive: AdaptiveParams
    variants: list[str]
    recip_models: dict  # variant -> ReciprocalErrorModel
    synthetic: Optional[SynthParams] = None
    baseline: Optional[Configuration] = None
    out_dir: Path = Path("paretune-out")
    extra: dict = field(default_factory=dict)


def _num(v, what: str) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: expected a number, got {v!r}")


def _parse_system(d: dict) -> SystemDescription:
    try:
        dx, dy, dz = (_num(x, "system.domain") for x in d["domain"])
        geom = d.get("geometry", "bulk")
        if geom == "bulk":
            geometry = None
        elif isinstance(geom, dict) and "interfacial" in geom:
            geometry = Interfacial(*(_num(x, "system.geometry.interfacial") for x in geom["interfacial"]))
        else:
            raise ConfigError(f"system.geometry must be 'bulk' or {{'interfacial': [x, y, z]}}, got {geom!r}")
        return SystemDescription(
            domain_x=dx,
            domain_y=dy,
            domain_z=dz,
            n_particles=int(d["n_particles"]),
            n_procs=int(d.get("n_procs", 1)),
            dispersion_coeff=_num(d.get("dispersion_coeff", 1.0), "system.dispersion_coeff"),
            geometry=geometry,
            timesteps_per_sample=int(d.get("timesteps_per_sample", 1000)),
        )
    except KeyError as exc:
        raise ConfigError(f"system: missing key {exc}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"system: {exc}")


def _parse_accuracy(d: dict) -> AccuracySpec:
    mode = d.get("mode")
    try:
        if mode == "split":
            return Split(_num(d["real_threshold"], "accuracy.real_threshold"), _num(d["recip_threshold"], "accuracy.recip_threshold"))
        if mode == "combined":
            return Combined(_num(d["threshold"], "accuracy.threshold"))
    except KeyError as exc:
        raise ConfigError(f"accuracy: missing key {exc}")
    raise ConfigError(f"accuracy.mode must be 'split' or 'combined', got {mode!r}")


def _grid(v) -> GridSize:
    try:
        return GridSize(*(int(n) for n in v))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid {v!r}: {exc}")


def load_config(path) -> TuneConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if raw.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported config schema {raw.get('schema')!r}; expected {SCHEMA}")
    for key in ("system", "accuracy"):
        if key not in raw:
            raise ConfigError(f"config is missing the '{key}' section")

    system = _parse_system(raw["system"])
    try:
        ranges = ParameterRanges(**raw.get("ranges", {}))
        adaptive = AdaptiveParams(**raw.get("adaptive", {}))
    except TypeError as exc:
        raise ConfigError(str(exc))
    accuracy = _parse_accuracy(raw["accuracy"])

    synthetic = None
    if "synthetic" in raw:
        syn = dict(raw["synthetic"])
        syn.setdefault("n_procs", system.n_procs)
        try:
            synthetic = SynthParams.from_dict(syn)
        except TypeError as exc:
            raise ConfigError(f"synthetic: {exc}")

    sampler = dict(raw.get("sampler", {"kind": "synthetic"}))
    kind = sampler.get("kind")
    if kind == "synthetic":
        if synthetic is None:
            raise ConfigError("sampler 'synthetic' needs a 'synthetic' section")
    elif kind == "external":
        if "template" not in sampler:
            raise ConfigError("external sampler needs a 'template'")
    else:
        raise ConfigError(f"sampler.kind must be 'synthetic' or 'external', got {kind!r}")

    variants = list(raw.get("variants", ["ik"]))
    bad = [v for v in variants if v not in VARIANTS]
    if not variants or bad:
        raise ConfigError(f"variants must be a nonempty subset of {VARIANTS}, got {variants}")

    recip_cfg = raw.get("reciprocal_error", {"model": "surrogate"})
    recip_models = {}
    for v in variants:
        recip_models[v] = _recip_model(recip_cfg, v, path.parent, synthetic)

    baseline = None
    if "baseline" in raw:
        b = raw["baseline"]
        try:
            baseline = Configuration(_num(b["alpha"], "baseline.alpha"), _num(b["cutoff"], "baseline.cutoff"), int(b["order"]), _grid(b["grid"]))
        except KeyError as exc:
            raise ConfigError(f"baseline: missing key {exc}")

    out_dir = Path(raw.get("output", {}).get("dir", "paretune-out"))
    return TuneConfig(system, ranges, accuracy, sampler, adaptive, variants, recip_models, synthetic, baseline, out_dir)


def _recip_model(cfg: dict, variant: str, base: Path, synthetic: Optional[SynthParams]):
    kind = cfg.get("model", "surrogate")
    if kind == "surrogate":
        ck = cfg.get("ck", synthetic.surrogate_ck if synthetic else 1.0)
        if isinstance(ck, dict):
            ck = ck.get(variant)
        return SurrogateModel(_num(ck, "reciprocal_error.ck"))
    if kind == "tabulated":
        p = cfg.get("paths", {}).get(variant) if "paths" in cfg else cfg.get("path")
        if p is None:
            raise ConfigError(f"reciprocal_error: no table for variant {variant}")
        p = Path(p)
        try:
            return TabulatedModel.from_csv(p if p.is_absolute() else base / p)
        except OSError as exc:
            raise ConfigError(f"reciprocal_error: {exc}")
    raise ConfigError(f"reciprocal_error.model must be 'surrogate' or 'tabulated', got {kind!r}")


def make_sampler(cfg: TuneConfig):
    if cfg.sampler["kind"] == "synthetic":
        return SyntheticSampler(cfg.synthetic)
    return ExternalCommandSampler(
        cfg.sampler["template"],
        cfg.sampler.get("parser_regex", r"([0-9.eE+-]+)"),
        float(cfg.sampler.get("timeout_s", 600.0)),
    )


# ---------------------------------------------------------------- formatting


def fmt(x: float) -> float:
    """Round to 6 significant digits; json then prints the shortest round-trip repr."""
    return float(f"{x:.6g}")


def _json_ready(obj):
    if isinstance(obj, float):
        return fmt(obj)
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    return json.dumps(_json_ready(obj), sort_keys=True, indent=2) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file via temp-then-rename, only after all content exists."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, out_dir / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _per_variant_name(name: str, variant: str, n_variants: int) -> str:
    if n_variants == 1:
        return name
    stem, ext = name.rsplit(".", 1)
    return f"{stem}_{variant}.{ext}"


def _g6(x: float) -> str:
    return f"{x:.6g}"


def samples_csv(records) -> str:
    rows = sorted(
        (
            r.phase.value,
            r.config.order,
            r.config.cutoff,
            r.config.grid.sort_key,
            r.repeat_index,
            [_g6(r.config.alpha), _g6(r.config.cutoff), r.config.order, r.config.grid.nx, r.config.grid.ny,
             r.config.grid.nz, r.phase.value, repr(r.seconds)],
        )
        for r in records
    )
    return _csv_text(SAMPLES_HEADER, [row[-1] for row in rows])


def read_samples(path, variant: str) -> list[SampleRecord]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read samples file: {exc}")
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        if list(reader.fieldnames) != SAMPLES_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(SAMPLES_HEADER)}")
        out = []
        seen: dict[tuple, int] = {}
        for row in reader:
            try:
                cfg = Configuration(float(row["alpha"]), float(row["cutoff"]), int(row["order"]),
                                    _grid((row["nx"], row["ny"], row["nz"])), variant)
                phase = Phase(row["phase"])
                rep = seen.get((cfg, phase), 0)
                seen[(cfg, phase)] = rep + 1
                out.append(SampleRecord(cfg, phase, float(row["seconds"]), rep))
            except (ValueError, ParetuneError) as exc:
                raise ConfigError(f"{path}:{reader.line_num}: {exc}")
        return out


# ---------------------------------------------------------------- pipeline


class Stage:
    """Tags errors with the pipeline stage they came from."""

    current = "config"

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        Stage.current = self.name
        return self

    def __exit__(self, *exc):
        return False


def _partition(cfg: TuneConfig, variant: str, jobs: int):
    with Stage("search space"):
        space = build_search_space(cfg.system, cfg.ranges)
    with Stage(f"partition ({variant})"):
        sub = partition_space(space, cfg.accuracy, cfg.recip_models[variant], variant, jobs=jobs)
        frontier = extract_frontier(sub)
    return space, sub, frontier


def _frontier_entries(preds) -> list[dict]:
    return [
        {
            "rank": i,
            "predicted_seconds": p.est_seconds,
            "alpha": p.chosen_alpha,
            "alpha_interval": list(p.alpha_interval),
            "cutoff": p.point.cutoff,
            "order": p.point.order,
            "grid": list(p.point.grid.shape),
            "extrapolated": p.extrapolated,
        }
        for i, p in enumerate(preds, 1)
    ]


def _frontier_csv(preds) -> str:
    rows = [
        [i, _g6(p.est_seconds), _g6(p.chosen_alpha), _g6(p.point.cutoff), p.point.order,
         p.point.grid.nx, p.point.grid.ny, p.point.grid.nz, str(p.extrapolated).lower()]
        for i, p in enumerate(preds, 1)
    ]
    return _csv_text(FRONTIER_HEADER, rows)


def _variant_report(variant, preds, sub, frontier, samples_used, wall) -> dict:
    best = preds[0]
    return {
        "variant": variant,
        "chosen": {
            "alpha": best.chosen_alpha,
            "cutoff": best.point.cutoff,
            "order": best.point.order,
            "grid": list(best.point.grid.shape),
        },
        "predicted_seconds": best.est_seconds,
        "alpha_interval": list(best.alpha_interval),
        "accurate_points": len(sub),
        "frontier_size": len(frontier),
        "frontier": _frontier_entries(preds),
        "samples_used": samples_used,
        "wall_time_s": wall,
    }


def _baseline_entry(cfg: TuneConfig, variant: str, model, rec: RecordingSampler, chosen_seconds: float) -> dict:
    b = Configuration(cfg.baseline.alpha, cfg.baseline.cutoff, cfg.baseline.order, cfg.baseline.grid, variant)
    entry: dict[str, Any] = {
        "config": {"alpha": b.alpha, "cutoff": b.cutoff, "order": b.order, "grid": list(b.grid.shape)},
    }
    try:
        est = estimate_errors(b, cfg.system, cfg.recip_models[variant])
        entry.update(real_err=est.real_err, recip_err=est.recip_err, accurate=est.satisfies(cfg.accuracy))
    except ParetuneError as exc:
        log.warning("baseline accuracy unknown: %s", exc)
        entry["accurate"] = None
    if b.order in model.recip_models:
        seconds, _ = predict_detail((b.cutoff, b.grid, b.order), model)
        entry["predicted_seconds"] = seconds
    else:
        # order never sampled: time the baseline directly
        seconds = rec.measure(b, Phase.TOTAL, cfg.system.timesteps_per_sample)
        entry["predicted_seconds"] = None
        entry["measured_seconds"] = seconds
    entry["speedup"] = seconds / chosen_seconds
    return entry


def cmd_tune(cfg: TuneConfig, out_dir: Path, jobs: int = 1) -> dict:
    results, files = [], {}
    n_var = len(cfg.variants)
    for variant in cfg.variants:
        t0 = time.perf_counter()
        space, sub, frontier = _partition(cfg, variant, jobs)
        rec = RecordingSampler(make_sampler(cfg))
        with Stage(f"sampling ({variant})"):
            sample_subspace(sub, rec, cfg.adaptive, cfg.system.timesteps_per_sample, jobs=jobs)
        with Stage(f"modeling ({variant})"):
            model = build_perf_model(rec.records, cfg.adaptive.rel_error_threshold, cfg.system.n_procs)
            require_coverage(frontier, model)
            preds = rank_frontier(frontier, model)
        with Stage(f"baseline ({variant})"):
            baseline = _baseline_entry(cfg, variant, model, rec, preds[0].est_seconds) if cfg.baseline else None
        elapsed = time.perf_counter() - t0
        # synthetic runs report the simulated sampling cost so reports stay reproducible
        wall = sum(r.seconds for r in rec.records) if cfg.sampler["kind"] == "synthetic" else elapsed
        report = _variant_report(variant, preds, sub, frontier, rec.calls, wall)
        if baseline is not None:
            report["baseline"] = baseline
        results.append(report)
        files[_per_variant_name("frontier.csv", variant, n_var)] = _frontier_csv(preds)
        files[_per_variant_name("samples.csv", variant, n_var)] = samples_csv(rec.records)
        best = preds[0]
        print(
            f"[{variant}] chosen alpha={best.chosen_alpha:g} cutoff={best.point.cutoff:g} order={best.point.order} "
            f"grid={best.point.grid} predicted={best.est_seconds:.4g}s "
            f"(frontier {len(frontier)}, {rec.calls} samples, {elapsed:.2f}s elapsed)"
        )
        if baseline is not None:
            note = "" if baseline["accurate"] else " (baseline does not meet the accuracy target)"
            print(f"[{variant}] baseline speedup {baseline['speedup']:.3f}x{note}")
    report = {"schema": SCHEMA, "results": results}
    files["report.json"] = dump_json(report)
    write_outputs(out_dir, files)
    return report


def cmd_partition(cfg: TuneConfig, out_dir: Path, jobs: int = 1) -> dict:
    files, counts = {}, {}
    for variant in cfg.variants:
        space, sub, frontier = _partition(cfg, variant, jobs)
        on_front = {p.key for p in frontier}
        rows = [
            [_g6(p.cutoff), p.grid.nx, p.grid.ny, p.grid.nz, p.order, _g6(p.alpha_lo), _g6(p.alpha_hi),
             str(p.key in on_front).lower()]
            for p in sub.points
        ]
        files[_per_variant_name("subspace.csv", variant, len(cfg.variants))] = _csv_text(SUBSPACE_HEADER, rows)
        counts[variant] = {"perf_points": space.n_perf_points, "accurate": len(sub), "frontier": len(frontier)}
        print(f"[{variant}] perf points {space.n_perf_points}, accurate {len(sub)}, frontier {len(frontier)}")
    write_outputs(out_dir, files)
    return counts


def cmd_predict(cfg: TuneConfig, samples_path, out_dir: Path, jobs: int = 1) -> dict:
    results, files = [], {}
    for variant in cfg.variants:
        _, sub, frontier = _partition(cfg, variant, jobs)
        with Stage(f"modeling ({variant})"):
            records = read_samples(samples_path, variant)
            if not records:
                raise MissingCoverage(f"{samples_path}: no samples")
            model = build_perf_model(records, cfg.adaptive.rel_error_threshold, cfg.system.n_procs)
            require_coverage(frontier, model)
            preds = rank_frontier(frontier, model)
        results.append(_variant_report(variant, preds, sub, frontier, 0, 0.0))
        files[_per_variant_name("frontier.csv", variant, len(cfg.variants))] = _frontier_csv(preds)
        best = preds[0]
        print(f"[{variant}] chosen alpha={best.chosen_alpha:g} cutoff={best.point.cutoff:g} "
              f"order={best.point.order} grid={best.point.grid} predicted={best.est_seconds:.4g}s")
    report = {"schema": SCHEMA, "results": results}
    files["report.json"] = dump_json(report)
    write_outputs(out_dir, files)
    return report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="paretune", description="Accuracy-constrained parameter tuner for mesh-Ewald codes.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("tune", "partition, sample, model and rank; writes report.json, frontier.csv, samples.csv"),
        ("partition", "write the accurate subspace to subspace.csv"),
        ("predict", "rank the frontier from a recorded samples CSV"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="JSON config file")
        if name == "predict":
            p.add_argument("samples", help="samples CSV (alpha,cutoff,order,nx,ny,nz,phase,seconds)")
        p.add_argument("--jobs", type=int, default=None, help="max concurrent workers")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    Stage.current = "config"
    try:
        cfg = load_config(args.config)
        out_dir = Path(args.out) if args.out else cfg.out_dir
        jobs = args.jobs
        if jobs is None:
            jobs = 1 if cfg.sampler["kind"] == "external" else (os.cpu_count() or 1)
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "tune":
            cmd_tune(cfg, out_dir, jobs)
        elif args.command == "partition":
            cmd_partition(cfg, out_dir, jobs)
        else:
            cmd_predict(cfg, args.samples, out_dir, jobs)
    except EmptyAccurateSubspace as exc:
        print(f"paretune: [{Stage.current}] EmptyAccurateSubspace: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except SamplerFailure as exc:
        print(f"paretune: [{Stage.current}] {type(exc).__name__} at {exc.position}: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except ParetuneError as exc:
        print(f"paretune: [{Stage.current}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
