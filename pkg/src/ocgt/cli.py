"""Config-driven command line: single runs, bits-vs-regret sweeps, and
step-size certification. All outputs are CSV plus JSON sidecars; identical
configs and seeds reproduce byte-identical files regardless of worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import engine, graph, losses, theory
from .compress import parse_spec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _check_keys(d, path, required, optional=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(d) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    missing = sorted(set(required) - set(d))
    if missing:
        raise ConfigError(f"{path}: missing keys {missing}")


def _load_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def build_topology(cfg):
    _check_keys(cfg, "topology", ["kind", "n"], ["p", "seed"])
    kind = cfg["kind"]
    if kind == "erdos_renyi":
        return graph.gen_erdos_renyi(cfg["n"], cfg["p"], cfg.get("seed", 0))
    if kind == "ring":
        return graph.gen_ring(cfg["n"])
    if kind == "complete":
        return graph.gen_complete(cfg["n"])
    raise ConfigError(f"topology.kind: unknown kind {kind!r}")


def build_smoothing(cfg):
    if cfg is None:
        return None
    _check_keys(cfg, "smoothing", ["kind", "value"])
    return losses.SmoothingSchedule(cfg["kind"], cfg["value"])


def _drift_from_config(cfg, dim, path):
    if cfg is None:
        return None
    _check_keys(cfg, path, ["kind"], ["rate", "magnitude"])
    direction = np.full(dim, cfg.get("magnitude", 1.0) / math.sqrt(dim))
    if cfg["kind"] == "static":
        return losses.StaticPath()
    if cfg["kind"] == "linear":
        return losses.LinearPath(direction)
    if cfg["kind"] == "geometric":
        return losses.GeometricPath(direction, cfg.get("rate", 0.5))
    raise ConfigError(f"{path}.kind: unknown kind {cfg['kind']!r}")


def build_family(cfg, n_agents):
    _check_keys(
        cfg,
        "loss",
        ["kind"],
        [
            "dim", "seed", "eig_min", "eig_max", "center_scale", "noise_std",
            "identical", "drift", "batch", "reg", "separation", "test_size",
            "path", "test_fraction",
        ],
    )
    kind = cfg["kind"]
    if kind == "quadratic":
        dim = cfg["dim"]
        return losses.random_quadratic(
            n_agents,
            dim,
            cfg.get("seed", 0),
            eig_min=cfg.get("eig_min", 0.5),
            eig_max=cfg.get("eig_max", 2.0),
            center_scale=cfg.get("center_scale", 3.0),
            drift=_drift_from_config(cfg.get("drift"), dim, "loss.drift"),
            noise_std=cfg.get("noise_std", 0.0),
            identical=cfg.get("identical", False),
        )
    if kind == "logistic_synthetic":
        return losses.synthetic_logistic(
            n_agents,
            cfg["dim"],
            cfg.get("seed", 0),
            batch=cfg.get("batch", 1),
            reg=cfg.get("reg", 0.05),
            separation=cfg.get("separation", 3.0),
            test_size=cfg.get("test_size", 200),
        )
    if kind == "logistic_csv":
        return losses.csv_logistic(
            cfg["path"],
            n_agents,
            batch=cfg.get("batch", 1),
            reg=cfg.get("reg", 0.05),
            test_fraction=cfg.get("test_fraction", 0.2),
            seed=cfg.get("seed", 0),
        )
    raise ConfigError(f"loss.kind: unknown kind {kind!r}")


def _validate_common(cfg, extra_required, extra_optional=()):
    if "config" in cfg and "meta" in cfg:  # sidecar round-trip
        cfg = cfg["config"]
    required = [
        "schema_version", "seeds", "T", "eta", "alpha_x", "alpha_y",
        "topology", "loss", *extra_required,
    ]
    _check_keys(cfg, "config", required, extra_optional)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version: expected {SCHEMA_VERSION}, got {cfg['schema_version']}"
        )
    seeds = cfg["seeds"]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: must be distinct")
    return cfg


def _validate_algorithm(cfg, path):
    _check_keys(cfg, path, ["name", "feedback", "compressor"], ["smoothing"])
    parse_spec(cfg["compressor"])
    return cfg


def _run_config(cfg, mixing, algo, seed):
    return engine.RunConfig(
        mixing=mixing,
        eta=cfg["eta"],
        alpha_x=cfg["alpha_x"],
        alpha_y=cfg["alpha_y"],
        T=cfg["T"],
        feedback=algo["feedback"],
        compressor=parse_spec(algo["compressor"]),
        seed=seed,
        smoothing=build_smoothing(algo.get("smoothing")),
    )


def _sidecar(cfg, algo, seed, topo, out_path):
    single = dict(cfg)
    single["seeds"] = [seed]
    single["algorithms"] = [algo]
    single.pop("compressors", None)
    payload = {
        "config": single,
        "meta": {
            "er_attempts": topo.attempts,
            "note": (
                "per-agent sweep regret uses each agent's own iterate "
                "f_t(x_{i,t}) in place of the average iterate"
            ),
        },
    }
    out_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _execute_jobs(jobs, workers):
    if workers <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def cmd_run(cfg, out_dir, workers):
    cfg = _validate_common(cfg, ["algorithms"])
    for i, algo in enumerate(cfg["algorithms"]):
        _validate_algorithm(algo, f"algorithms[{i}]")
    topo = build_topology(cfg["topology"])
    mixing = graph.metropolis_weights(topo)
    out_dir.mkdir(parents=True, exist_ok=True)

    def make_job(algo, seed):
        def job():
            family = build_family(cfg["loss"], topo.n)
            record = engine.run(_run_config(cfg, mixing, algo, seed), family)
            stem = out_dir / f"{algo['name']}_seed{seed}"
            engine.write_run_csv(record, stem.with_suffix(".csv"))
            _sidecar(cfg, algo, seed, topo, stem.with_suffix(".json"))
            return algo["name"], seed, record

        return job

    jobs = [make_job(a, s) for a in cfg["algorithms"] for s in cfg["seeds"]]
    results = _execute_jobs(jobs, workers)
    failed = [(name, seed) for name, seed, rec in results if rec.diverged]
    for name, seed in failed:
        print(f"divergence: algorithm {name}, seed {seed}", file=sys.stderr)
    return 1 if failed else 0


def cmd_sweep(cfg, out_dir, workers):
    cfg = _validate_common(
        cfg, ["compressors", "feedback"], ["smoothing"]
    )
    if not cfg["compressors"]:
        raise ConfigError("compressors: sweep axis must be non-empty")
    for spec in cfg["compressors"]:
        parse_spec(spec)
    topo = build_topology(cfg["topology"])
    mixing = graph.metropolis_weights(topo)
    out_dir.mkdir(parents=True, exist_ok=True)

    def make_job(spec_text, seed):
        algo = {
            "name": spec_text.replace(":", "_").replace("=", ""),
            "feedback": cfg["feedback"],
            "compressor": spec_text,
        }
        if cfg.get("smoothing") is not None:
            algo["smoothing"] = cfg["smoothing"]

        def job():
            family = build_family(cfg["loss"], topo.n)
            record = engine.run(_run_config(cfg, mixing, algo, seed), family)
            stem = out_dir / f"sweep_{algo['name']}_seed{seed}"
            engine.write_run_csv(record, stem.with_suffix(".csv"))
            _sidecar(cfg, algo, seed, topo, stem.with_suffix(".json"))
            t_eff = max(cfg["T"], 1)
            max_reg = float(np.max(record.per_agent_regret)) / t_eff
            return spec_text, seed, record.total_bits, max_reg, record.diverged

        return job

    jobs = [make_job(c, s) for c in cfg["compressors"] for s in cfg["seeds"]]
    results = _execute_jobs(jobs, workers)
    results.sort(key=lambda r: (r[0], r[1]))
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["compressor", "seed", "bits_total", "max_regret_per_agent_over_T"]
        )
        for spec_text, seed, bits, max_reg, _div in results:
            writer.writerow([spec_text, seed, bits, format(max_reg, ".17g")])
    if any(r[4] for r in results):
        print("divergence during sweep", file=sys.stderr)
        return 1
    return 0


CERT_FIELDS = [
    "L", "mu", "m", "n", "omega", "rho_eta",
    "alpha_x", "alpha_y", "tau_x", "tau_y",
]


def cmd_certify(cfg, out_dir, workers):
    _check_keys(cfg, "config", ["schema_version", "instances"], ["variants"])
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}")
    variants = cfg.get("variants", list(theory.VARIANTS))
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for idx, inst in enumerate(cfg["instances"]):
        _check_keys(
            inst, f"instances[{idx}]",
            ["L", "mu", "m", "n", "omega", "rho_eta"],
            ["alpha_x", "alpha_y", "tau_x", "tau_y"],
        )
        for variant in variants:
            base = [idx] + [inst.get(f, _cert_default(f)) for f in CERT_FIELDS]
            try:
                params = theory.AnalysisParams(**inst)
                cert = theory.find_eta_star(params, variant)
            except theory.InvalidParams as exc:
                rows.append(base + [variant, False, "", "", "", "", "", "", str(exc)])
                continue
            eta1, eta2, eta3, eta4 = cert.thresholds
            rows.append(
                base
                + [
                    variant,
                    cert.certified,
                    _g(cert.eta_star),
                    _g(cert.rho),
                    _g(eta1), _g(eta2), _g(eta3), _g(eta4),
                    cert.reason,
                ]
            )
    with open(out_dir / "certification.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["instance", *CERT_FIELDS, "variant", "certified", "eta_star",
             "rho", "eta1", "eta2", "eta3", "eta4", "reason"]
        )
        writer.writerows(rows)
    return 0


def _cert_default(field):
    return {"alpha_x": 0.5, "alpha_y": 0.5, "tau_x": 2.0, "tau_y": 2.0}.get(field, "")


def _g(value):
    if value is None:
        return ""
    if math.isinf(value):
        return "inf"
    return format(value, ".17g")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ocgt", description="distributed online optimization experiments"
    )
    parser.add_argument("command", choices=["run", "sweep", "certify"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="out")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed-override", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = _load_json(args.config)
        if "config" in cfg and "meta" in cfg:
            cfg = cfg["config"]
        if args.seed_override is not None and args.command in ("run", "sweep"):
            cfg = dict(cfg)
            cfg["seeds"] = [args.seed_override]
        handler = {"run": cmd_run, "sweep": cmd_sweep, "certify": cmd_certify}
        return handler[args.command](cfg, Path(args.out), args.workers)
    except (ConfigError, FileNotFoundError, graph.InfeasibleTopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
