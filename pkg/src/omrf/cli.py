"""Command-line interface: ``omrf {simulate,fit,sample,calibrate,metrics,benchmark}``.

Every command takes ``--config`` (JSON, unknown keys rejected) and writes the
fully defaulted configuration next to its outputs as ``config.json``.

Exit codes: 0 success, 2 invalid input or configuration, 3 model too large
for enumeration, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import dichotomize, load_scs_standin
from .estimate import GraphStructure, map_pseudo, mple, robbins_monro
from .exceptions import CapacityError, ConfigError, NumericalError, ValidationError
from .metrics import build_report
from .model import Dataset, ModelSpec, PriorSpec
from .rescale import build_rescaling, post_hoc_calibrate
from .samplers import METHODS, AdaCoReConfig, Chain, SamplerConfig, sample_method
from .serialize import (
    atomic_write,
    read_chain,
    read_dataset,
    read_json,
    read_structure,
    write_chain,
    write_json,
    write_simulated,
)
from .simulate import STRUCTURES, SimulationPlan, run_simulation_plan

log = logging.getLogger("omrf")

EXIT_OK, EXIT_VALIDATION, EXIT_CAPACITY, EXIT_NUMERICAL = 0, 2, 3, 4

_SAMPLER_KEYS = [f.name for f in fields(SamplerConfig) if f.name not in ("seed", "inner_gibbs_iters")]

DEFAULT_CONFIG: dict = {
    "model": {"p": None, "m": None},
    "prior": {"sd_threshold": 5.0, "sd_interaction": 2.5},
    "sampler": {k: v for k, v in SamplerConfig().to_dict().items() if k in _SAMPLER_KEYS},
    "method": "pseudo",
    "seed": 0,
    "mc_samples": {"inner": 25_000, "outer": 100_000},
    "io": {"data": None, "structure": None, "chain": None, "exact_chain": None, "chains": [],
           "out": "omrf-out"},
    "simulate": {"source": None, "dichotomize": False, "N": 500, "P": 6,
                 "structure_type": "random", "K_str": 10, "K_sample": 10, "density": 0.3,
                 "rewire_prob": 0.1, "ring_degree": 2, "gibbs_sweeps": 100},
    "benchmark": {
        "structures": list(STRUCTURES),
        "P": [4, 6],
        "N": [500, 1000],
        "K_str": 4,
        "K_sample": 5,
        "methods": [m for m in METHODS if m != "exact"],
        "iterations": 5000,
        "burn_in": 1000,
        "inner": 2000,
        "outer": 20_000,
    },
}
# the adacore block is a nested dataclass; tau None means 3/sqrt(n)
DEFAULT_CONFIG["sampler"]["adacore"] = AdaCoReConfig().__dict__.copy()

_NULLABLE = {("model", "p"), ("model", "m"), ("sampler", "sigma2_init"), ("sampler", "adacore", "tau"),
             ("io", "data"), ("io", "structure"), ("io", "chain"), ("io", "exact_chain"),
             ("simulate", "source")}


def _merge(defaults: dict, given: dict, path=()) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = ".".join(path + (key,))
        if key not in defaults:
            raise ConfigError(f"unknown configuration key {where!r}")
        ref = defaults[key]
        if isinstance(ref, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be an object")
            out[key] = _merge(ref, value, path + (key,))
            continue
        if value is None:
            if ref is not None and path + (key,) not in _NULLABLE:
                raise ConfigError(f"{where} may not be null")
        elif isinstance(ref, bool) and not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        elif isinstance(ref, int) and not isinstance(ref, bool) and (
                not isinstance(value, int) or isinstance(value, bool)):
            raise ConfigError(f"{where} must be an integer")
        elif isinstance(ref, float) and (not isinstance(value, (int, float)) or isinstance(value, bool)):
            raise ConfigError(f"{where} must be a number")
        elif isinstance(ref, str) and not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        elif isinstance(ref, list) and not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults merged with the JSON file at ``path`` and then ``overrides``."""
    given = {}
    if path is not None:
        try:
            given = read_json(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(given, dict):
            raise ConfigError(f"{path}: top level must be an object")
    cfg = _merge(DEFAULT_CONFIG, given)
    if overrides:
        cfg = _merge(cfg, overrides)
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {', '.join(METHODS)}")
    for m in cfg["benchmark"]["methods"]:
        if m not in METHODS:
            raise ConfigError(f"benchmark method {m!r} unknown")
    sampler_config(cfg)   # validates ranges
    prior_spec(cfg)
    return cfg


def sampler_config(cfg: dict, seed=None) -> SamplerConfig:
    s = dict(cfg["sampler"])
    s["adacore"] = AdaCoReConfig(**s["adacore"])
    return SamplerConfig(seed=cfg["seed"] if seed is None else seed,
                         inner_gibbs_iters=cfg["mc_samples"]["inner"], **s)


def prior_spec(cfg: dict) -> PriorSpec:
    return PriorSpec(**cfg["prior"])


def _load_data(cfg: dict, path=None) -> Dataset:
    path = path or cfg["io"]["data"]
    if path is None:
        raise ValidationError("no dataset given (use --data or io.data)")
    data = read_dataset(path, m=cfg["model"]["m"])
    if cfg["model"]["p"] is not None and cfg["model"]["p"] != data.p:
        raise ValidationError(f"dataset has {data.p} columns, config says p={cfg['model']['p']}")
    return data


def _out(cfg: dict) -> Path:
    out = Path(cfg["io"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", cfg)
    return out


# ---------------------------------------------------------------------------
# commands


def _source(cfg: dict) -> Dataset:
    sim = cfg["simulate"]
    src = load_scs_standin() if sim["source"] is None else read_dataset(sim["source"])
    return dichotomize(src) if sim["dichotomize"] else src


def cmd_simulate(cfg: dict) -> int:
    sim = cfg["simulate"]
    plan = SimulationPlan(source=_source(cfg), seed=cfg["seed"],
                          **{k: v for k, v in sim.items() if k not in ("source", "dichotomize")})
    out = _out(cfg)
    results = run_simulation_plan(plan)
    for s in results:
        i, j = s.provenance["structure_index"], s.provenance["sample_index"]
        write_simulated(out, s, f"dataset_s{i:03d}_r{j:03d}")
    log.info("wrote %d datasets to %s", len(results), out)
    return EXIT_OK


def cmd_fit(cfg: dict, data_path=None) -> int:
    data = _load_data(cfg, data_path)
    prior = prior_spec(cfg)
    structure = None
    if cfg["io"]["structure"]:
        structure = read_structure(cfg["io"]["structure"], data.p)
    fit = mple(data, structure=structure, prior=prior)
    out = _out(cfg)
    result = {"names": data.spec.names(), "map": fit.to_dict()}
    if cfg["method"] in ("core-rm", "ph-rm"):
        rm = robbins_monro(data, prior=prior, mc_samples=max(1000, cfg["mc_samples"]["outer"] // 10),
                           theta0=fit.theta_star, seed=cfg["seed"])
        result["robbins_monro"] = rm.to_dict()
    write_json(out / "fit.json", result)
    return EXIT_OK if fit.converged else EXIT_NUMERICAL


def cmd_sample(cfg: dict, data_path=None) -> int:
    data = _load_data(cfg, data_path)
    chain = sample_method(cfg["method"], data, prior_spec(cfg), sampler_config(cfg),
                          mc_outer=cfg["mc_samples"]["outer"])
    out = _out(cfg)
    write_chain(out / f"chain_{cfg['method']}.csv", chain, data.spec.names(),
                extra={"config": cfg, "seed": cfg["seed"]})
    log.info("%s: acceptance %.3f, %.1f s", chain.method, chain.acceptance_rate,
             chain.wall_time_seconds)
    return EXIT_OK


def cmd_calibrate(cfg: dict, data_path=None, chain_path=None) -> int:
    """Post-hoc calibration of a stored pseudo chain (``method`` must be a ph-* variant)."""
    method = cfg["method"]
    if not method.startswith("ph-"):
        raise ValidationError("calibrate needs method ph-ghw, ph-mch or ph-rm")
    data = _load_data(cfg, data_path)
    prior = prior_spec(cfg)
    chain_path = chain_path or cfg["io"]["chain"]
    if chain_path is None:
        raise ValidationError("no pseudo chain given (use --chain or io.chain)")
    pseudo, names, _ = read_chain(chain_path)
    if pseudo.d != data.spec.d:
        raise ValidationError(f"chain has {pseudo.d} columns, model needs {data.spec.d}")
    mode = map_pseudo(data, prior=prior).theta_star
    variant = method[3:].upper()
    if variant == "RM":
        anchor = robbins_monro(data, prior=prior, mc_samples=max(1000, cfg["mc_samples"]["outer"] // 10),
                               theta0=mode, seed=cfg["seed"]).theta_star
        resc = build_rescaling(data, anchor, prior, "RM", cfg["mc_samples"]["outer"], seed=cfg["seed"])
        L = build_rescaling(data, mode, prior, "GHW").L_factor
        draws = post_hoc_calibrate(pseudo.draws, mode, L, resc.Gamma_factor, "mode", location=anchor)
    else:
        resc = build_rescaling(data, mode, prior, variant, cfg["mc_samples"]["outer"], seed=cfg["seed"])
        draws = post_hoc_calibrate(pseudo.draws, mode, resc.L_factor, resc.Gamma_factor, "mean")
    chain = Chain(draws, pseudo.accept_trace, pseudo.sigma2_trace, pseudo.wall_time_seconds,
                  method, 0, pseudo.draws, {"rescaling": resc.to_dict(), "source_chain": str(chain_path)})
    out = _out(cfg)
    write_chain(out / f"chain_{method}.csv", chain, names, extra={"config": cfg})
    return EXIT_OK


def _interaction_mask(spec: ModelSpec) -> np.ndarray:
    mask = np.zeros(spec.d, dtype=bool)
    mask[spec.interaction_slice()] = True
    return mask


def cmd_metrics(cfg: dict, exact_path=None, chain_paths=None) -> int:
    exact_path = exact_path or cfg["io"]["exact_chain"]
    chain_paths = chain_paths or cfg["io"]["chains"]
    if exact_path is None or not Path(exact_path).exists():
        raise ValidationError(f"exact chain not found: {exact_path}")
    if not chain_paths:
        raise ValidationError("no method chains given")
    exact, names, _ = read_chain(exact_path)
    prior = cfg["prior"]
    sds = np.array([prior["sd_interaction"] if n.startswith("theta_") else prior["sd_threshold"]
                    for n in names])
    is_inter = np.array([n.startswith("theta_") for n in names])
    out = _out(cfg)
    reports = []
    csv_parts = []
    for path in [exact_path, *chain_paths]:
        chain, cnames, _ = read_chain(path)
        if cnames != names:
            raise ValidationError(f"{path}: parameter layout differs from the exact chain")
        rep = build_report(chain, names, reference=exact, prior_sds=sds, bf_mask=is_inter)
        rep.extra["source"] = str(path)
        reports.append(rep.to_dict())
        text = rep.to_long_csv()
        csv_parts.append(text if not csv_parts else text.split("\n", 1)[1])
    write_json(out / "metrics.json", {"reports": reports,
                                      "note": "Savage-Dickey factors assume nuisance priors match "
                                              "between the compared models"})
    atomic_write(out / "metrics.csv", "".join(csv_parts))
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark


def benchmark_cells(cfg: dict) -> list[dict]:
    b = cfg["benchmark"]
    cells = []
    for ci, (st, P, N) in enumerate((st, P, N) for st in b["structures"] for P in b["P"] for N in b["N"]):
        for r in range(b["K_str"] * b["K_sample"]):
            cells.append({"id": f"{st}_P{P}_N{N}_r{r:03d}", "condition": ci, "structure_type": st,
                          "P": P, "N": N, "replicate": r})
    return cells


def _cell_dataset(cfg: dict, cell: dict):
    b = cfg["benchmark"]
    sim = cfg["simulate"]
    i, j = divmod(cell["replicate"], b["K_sample"])
    seed = int(np.random.SeedSequence(cfg["seed"], spawn_key=(cell["condition"],)).generate_state(1)[0])
    plan = SimulationPlan(source=_source(cfg), N=cell["N"], P=cell["P"],
                          structure_type=cell["structure_type"], K_str=i + 1, K_sample=j + 1,
                          density=sim["density"], rewire_prob=sim["rewire_prob"],
                          ring_degree=sim["ring_degree"], gibbs_sweeps=sim["gibbs_sweeps"], seed=seed)
    # children are spawned in order, so smaller plans reproduce the same leading datasets
    return run_simulation_plan(plan)[-1]


def run_cell(cfg: dict, cell: dict) -> list[dict]:
    """All methods on one replicate; returns long-format metric rows."""
    b = cfg["benchmark"]
    sim = _cell_dataset(cfg, cell)
    data = sim.data
    prior = prior_spec(cfg)
    seed = int(np.random.SeedSequence(cfg["seed"], spawn_key=(cell["condition"], cell["replicate"], 1))
               .generate_state(1)[0])
    scfg = sampler_config(cfg, seed=seed)
    scfg.iterations, scfg.burn_in, scfg.inner_gibbs_iters = b["iterations"], b["burn_in"], b["inner"]
    names = data.spec.names()
    present = np.zeros(data.spec.d, dtype=bool)
    for e in sim.structure.edges:
        present[data.spec.interaction_index(*e)] = True
    inter = _interaction_mask(data.spec)
    sds = prior.sds(data.spec)
    exact = sample_method("exact", data, prior, scfg)
    pseudo = None
    rows = []
    for method in ["exact", *b["methods"]]:
        if method == "exact":
            chain = exact
        else:
            chain = sample_method(method, data, prior, scfg, mc_outer=b["outer"], pseudo_chain=pseudo)
            if method == "pseudo":
                pseudo = chain
        rep = build_report(chain, names, reference=exact, prior_sds=sds, bf_mask=inter)
        cols = rep._columns()
        for k, name in enumerate(names):
            kind = "threshold" if not inter[k] else ("edge" if present[k] else "absent")
            for metric, values in cols.items():
                rows.append({**{c: cell[c] for c in ("structure_type", "P", "N", "replicate")},
                             "method": method, "parameter": name, "kind": kind,
                             "metric": metric, "value": float(values[k])})
        for metric, value in (("wall_time_seconds", chain.wall_time_seconds),
                              ("acceptance_rate", chain.acceptance_rate)):
            rows.append({**{c: cell[c] for c in ("structure_type", "P", "N", "replicate")},
                         "method": method, "parameter": "", "kind": "chain",
                         "metric": metric, "value": float(value)})
    return rows


def _run_and_store(args):
    cfg, cell, out = args
    rows = run_cell(cfg, cell)
    write_json(Path(out) / "cells" / f"{cell['id']}.json", {"cell": cell, "rows": rows})
    return cell["id"]


def aggregate(rows: list[dict]) -> list[dict]:
    """Median and 5%/95% quantiles per condition, method, parameter kind and metric."""
    groups: dict = {}
    for r in rows:
        key = (r["structure_type"], r["P"], r["N"], r["method"], r["kind"], r["metric"])
        groups.setdefault(key, []).append(r["value"])
    out = []
    for key in sorted(groups):
        v = np.array(sorted(groups[key]), dtype=float)
        v = v[np.isfinite(v)]
        q = np.quantile(v, [0.05, 0.5, 0.95]) if v.size else [np.nan] * 3
        out.append(dict(zip(("structure_type", "P", "N", "method", "kind", "metric"), key),
                        count=int(v.size), median=float(q[1]), q05=float(q[0]), q95=float(q[2])))
    return out


def cmd_benchmark(cfg: dict, threads: int = 1, resume: bool = False) -> int:
    out = _out(cfg)
    cells = benchmark_cells(cfg)
    manifest_path = out / "manifest.json"
    done: set = set()
    if resume and manifest_path.exists():
        manifest = read_json(manifest_path)
        done = {c["id"] for c in manifest["cells"]
                if c.get("done") and (out / "cells" / f"{c['id']}.json").exists()}
    todo = [c for c in cells if c["id"] not in done]

    def save_manifest():
        write_json(manifest_path, {"cells": [{**c, "done": c["id"] in done} for c in cells]})

    save_manifest()
    log.info("benchmark: %d cells, %d to run", len(cells), len(todo))
    jobs = [(cfg, c, str(out)) for c in todo]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for cid in pool.map(_run_and_store, jobs):
                done.add(cid)
                save_manifest()
    else:
        for job in jobs:
            done.add(_run_and_store(job))
            save_manifest()

    rows = []
    for c in cells:
        rows.extend(read_json(out / "cells" / f"{c['id']}.json")["rows"])
    agg = aggregate(rows)
    header = ["structure_type", "P", "N", "method", "kind", "metric", "count", "median", "q05", "q95"]
    lines = [",".join(header)] + [",".join(str(r[h]) for h in header) for r in agg]
    atomic_write(out / "aggregate.csv", "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omrf", description="Bayesian inference for ordinal MRFs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--out", help="output directory (overrides io.out)")
    common.add_argument("--threads", type=int, default=1, help="worker processes (benchmark)")
    common.add_argument("--resume", action="store_true", help="skip benchmark cells already done")
    common.add_argument("--method", choices=METHODS, help="overrides the configured method")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate datasets from a plan")
    helps = {"fit": "point estimates (MPLE, MAP, Robbins-Monro)",
             "sample": "run one posterior sampler",
             "calibrate": "post-hoc calibration of a pseudo chain"}
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--data", help="dataset CSV (overrides io.data)")
        if name == "calibrate":
            p.add_argument("--chain", help="pseudo chain CSV to calibrate")
    p = sub.add_parser("metrics", parents=[common], help="compare chains against an exact chain")
    p.add_argument("--exact", help="exact chain CSV")
    p.add_argument("--chains", nargs="+", help="method chain CSVs")
    sub.add_parser("benchmark", parents=[common], help="run the benchmark grid")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["io"] = {"out": args.out}
    if args.method is not None:
        overrides["method"] = args.method
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "fit":
            return cmd_fit(cfg, args.data)
        if args.command == "sample":
            return cmd_sample(cfg, args.data)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, args.data, args.chain)
        if args.command == "metrics":
            return cmd_metrics(cfg, args.exact, args.chains)
        return cmd_benchmark(cfg, threads=max(1, args.threads), resume=args.resume)
    except CapacityError as exc:
        print(f"omrf: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except NumericalError as exc:
        print(f"omrf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, FileNotFoundError) as exc:
        print(f"omrf: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
