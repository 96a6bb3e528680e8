"""Graph structures, Gibbs synthesis and the structure/sample simulation design."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from . import _gibbs
from .estimate import GraphStructure, mple
from .exceptions import ValidationError
from .model import Dataset, ModelSpec, as_dataset

log = logging.getLogger(__name__)

STRUCTURES = ("smallworld", "random", "full")
RANDOM_INIT_BURN_IN = 1000


def _int_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def gen_structure(kind: str, p: int, rng: np.random.Generator | None = None, *,
                  density: float = 0.3, rewire_prob: float = 0.1,
                  ring_degree: int = 2) -> GraphStructure:
    """Draw a graph on ``p`` nodes.

    ``full`` connects every pair, ``random`` keeps each pair with probability
    ``density`` and ``smallworld`` is a Watts-Strogatz ring lattice with
    ``ring_degree`` neighbours per node and rewiring probability ``rewire_prob``.
    """
    if p < 2:
        raise ValidationError("a structure needs p >= 2")
    if kind == "full":
        return GraphStructure.full(p)
    rng = np.random.default_rng(rng)
    if kind == "random":
        if not 0 < density <= 1:
            raise ValidationError("density must lie in (0, 1]")
        g = nx.gnp_random_graph(p, density, seed=_int_seed(rng))
    elif kind == "smallworld":
        if ring_degree % 2 or ring_degree <= 0 or ring_degree >= p:
            raise ValidationError("ring_degree must be a positive even number below p")
        if not 0 <= rewire_prob <= 1:
            raise ValidationError("rewire_prob must lie in [0, 1]")
        g = nx.watts_strogatz_graph(p, ring_degree, rewire_prob, seed=_int_seed(rng))
    else:
        raise ValidationError(f"unknown structure type {kind!r}; choose from {', '.join(STRUCTURES)}")
    return GraphStructure(p, g.edges())


def gibbs_synthesize(theta, spec: ModelSpec, n: int, sweeps: int = 100, init=None,
                     rng: np.random.Generator | None = None) -> Dataset:
    """Independent Gibbs chains, one per row, returning their final states.

    Rows of ``init`` (a ``Dataset`` or array with ``n`` rows) give the start
    states; without it chains start uniformly at random and run an extra
    1000 burn-in sweeps.
    """
    if sweeps < 1:
        raise ValidationError("sweeps must be >= 1")
    theta = spec.check_theta(theta)
    rng = np.random.default_rng(rng)
    if init is None:
        states = rng.integers(0, spec.m + 1, size=(n, spec.p)).astype(np.int64)
        sweeps = sweeps + RANDOM_INIT_BURN_IN
    else:
        start = init.values if isinstance(init, Dataset) else np.asarray(init)
        if start.shape != (n, spec.p):
            raise ValidationError(f"init has shape {start.shape}, expected {(n, spec.p)}")
        states = np.array(start, dtype=np.int64)
    _gibbs.run_sweeps(states, theta, spec, sweeps, rng)
    return Dataset(states, spec)


@dataclass
class SimulationPlan:
    source: Dataset
    N: int
    P: int
    structure_type: str = "random"
    K_str: int = 10
    K_sample: int = 10
    density: float = 0.3
    rewire_prob: float = 0.1
    ring_degree: int = 2
    gibbs_sweeps: int = 100
    seed: int | None = None

    def __post_init__(self):
        self.source = as_dataset(self.source)
        if self.structure_type not in STRUCTURES:
            raise ValidationError(f"unknown structure type {self.structure_type!r}")
        if self.P > self.source.p:
            raise ValidationError(f"P={self.P} exceeds the {self.source.p} source columns")
        for name in ("N", "P", "K_str", "K_sample", "gibbs_sweeps"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.P < 2:
            raise ValidationError("P must be at least 2")

    def structure_params(self) -> dict:
        return {"density": self.density, "rewire_prob": self.rewire_prob,
                "ring_degree": self.ring_degree}


@dataclass
class SimulatedDataset:
    data: Dataset
    true_theta: np.ndarray
    structure: GraphStructure
    provenance: dict = field(default_factory=dict)


def _fit_structure(plan: SimulationPlan, rng: np.random.Generator):
    structure = gen_structure(plan.structure_type, plan.P, rng, **plan.structure_params())
    rows = rng.integers(0, plan.source.n, size=plan.N)
    cols = np.sort(rng.choice(plan.source.p, size=plan.P, replace=False))
    sub = Dataset(plan.source.values[np.ix_(rows, cols)], ModelSpec(plan.P, plan.source.m))
    fit = mple(sub, structure=structure)
    return structure, sub, cols, fit


def run_simulation_plan(plan: SimulationPlan) -> list[SimulatedDataset]:
    """Simulate ``K_str * K_sample`` datasets.

    For each structure a bootstrap/column subsample of the source is fitted by
    constrained MPLE; the fit then generates ``K_sample`` datasets by Gibbs
    synthesis started at the subsample.  Each structure draws from its own
    child of the plan seed, so results do not depend on evaluation order.
    """
    root = np.random.SeedSequence(plan.seed)
    out = []
    for i, child in enumerate(root.spawn(plan.K_str)):
        fit_seq, *sample_seqs = child.spawn(plan.K_sample + 1)
        rng = np.random.default_rng(fit_seq)
        structure, sub, cols, fit = _fit_structure(plan, rng)
        flagged = False
        if not fit.converged:
            log.warning("MPLE did not converge for structure %d; resampling once", i)
            structure, sub, cols, fit = _fit_structure(plan, rng)
            flagged = not fit.converged
        theta_hat = fit.theta_star
        for j, seq in enumerate(sample_seqs):
            data = gibbs_synthesize(theta_hat, sub.spec, plan.N, plan.gibbs_sweeps, init=sub,
                                    rng=np.random.default_rng(seq))
            prov = {
                "structure_index": i,
                "sample_index": j,
                "plan_seed": plan.seed,
                "structure_seed": list(child.spawn_key),
                "sample_seed": list(seq.spawn_key),
                "columns": cols.tolist(),
                "structure_type": plan.structure_type,
                **plan.structure_params(),
                "gibbs_sweeps": plan.gibbs_sweeps,
                "mple_converged": bool(fit.converged),
                "flagged": flagged,
            }
            out.append(SimulatedDataset(data, theta_hat.copy(), structure, prov))
    return out
