import numpy as np
import pytest

from omrf.datasets import dichotomize, load_scs_standin, make_scs_standin
from omrf.estimate import GraphStructure, mple
from omrf.exceptions import ValidationError
from omrf.model import Dataset, ModelSpec, pseudo_hessian, score_outer_product
from omrf.simulate import SimulationPlan, gen_structure, gibbs_synthesize, run_simulation_plan


class TestStructures:
    def test_full(self):
        g = gen_structure("full", 6)
        assert len(g) == 15
        assert g == gen_structure("full", 6)

    def test_random_density(self):
        rng = np.random.default_rng(0)
        counts = np.array([len(gen_structure("random", 9, rng, density=0.3)) for _ in range(10_000)])
        se = counts.std(ddof=1) / np.sqrt(counts.size)
        assert abs(counts.mean() - 0.3 * 36) < 3 * se

    def test_ring_without_rewiring(self):
        g = gen_structure("smallworld", 6, np.random.default_rng(1), rewire_prob=0.0, ring_degree=2)
        assert g.sorted_edges() == [(0, 1), (0, 5), (1, 2), (2, 3), (3, 4), (4, 5)]

    def test_smallworld_keeps_edge_count(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            g = gen_structure("smallworld", 8, rng, rewire_prob=0.5, ring_degree=4)
            assert len(g) == 16
            assert all(i < j for i, j in g.edges)

    def test_seed_reproducible(self):
        a = gen_structure("random", 9, np.random.default_rng(5))
        b = gen_structure("random", 9, np.random.default_rng(5))
        assert a == b

    @pytest.mark.parametrize("kind, kw", [("random", {"density": 0.0}), ("smallworld", {"ring_degree": 3}),
                                          ("smallworld", {"ring_degree": 6}), ("scalefree", {})])
    def test_invalid(self, kind, kw):
        with pytest.raises(ValidationError):
            gen_structure(kind, 6, np.random.default_rng(0), **kw)

    def test_too_small(self):
        with pytest.raises(ValidationError):
            gen_structure("full", 1)


class TestGibbs:
    def test_uniform_when_theta_zero(self):
        spec = ModelSpec(3, 2)
        data = gibbs_synthesize(np.zeros(spec.d), spec, 10_000, 1, rng=np.random.default_rng(0))
        se = np.sqrt((1 / 3) * (2 / 3) / 10_000)
        for h in range(3):
            assert np.all(np.abs((data.values == h).mean(0) - 1 / 3) < 3 * se)

    def test_pair_joint_matches_boltzmann(self):
        spec = ModelSpec(2, 1)
        data = gibbs_synthesize(np.array([0.0, 0.0, 2.0]), spec, 20_000, 20, rng=np.random.default_rng(1))
        p11 = np.e**2 / (3 + np.e**2)
        probs = {(0, 0): 1 / (3 + np.e**2), (0, 1): 1 / (3 + np.e**2), (1, 0): 1 / (3 + np.e**2), (1, 1): p11}
        for (a, b), p in probs.items():
            freq = np.mean((data.values[:, 0] == a) & (data.values[:, 1] == b))
            assert abs(freq - p) < 3 * np.sqrt(p * (1 - p) / 20_000)
        assert p11 == pytest.approx(0.711, abs=1e-3)

    def test_initialisations_agree(self):
        spec = ModelSpec(3, 2)
        theta = np.array([-0.2, -1.0, 0.3, -0.5, -0.4, -1.2, 0.4, -0.2, 0.3])
        n = 8000
        start = Dataset(np.zeros((n, 3), dtype=int), spec)
        a = gibbs_synthesize(theta, spec, n, 100, init=start, rng=np.random.default_rng(2)).values
        b = gibbs_synthesize(theta, spec, n, 100, rng=np.random.default_rng(3)).values
        for stat in (lambda x: x, lambda x: x[:, [0, 0, 1]] * x[:, [1, 2, 2]]):
            sa, sb = stat(a).astype(float), stat(b).astype(float)
            se = np.sqrt(sa.var(0) / n + sb.var(0) / n)
            assert np.all(np.abs(sa.mean(0) - sb.mean(0)) < 3.5 * se)

    def test_seed_bitwise(self):
        spec = ModelSpec(4, 3)
        theta = np.linspace(-1, 0.3, spec.d)
        a = gibbs_synthesize(theta, spec, 50, 5, rng=np.random.default_rng(9))
        b = gibbs_synthesize(theta, spec, 50, 5, rng=np.random.default_rng(9))
        np.testing.assert_array_equal(a.values, b.values)

    def test_bad_inputs(self):
        spec = ModelSpec(2, 1)
        with pytest.raises(ValidationError):
            gibbs_synthesize(np.zeros(3), spec, 5, 0)
        with pytest.raises(ValidationError):
            gibbs_synthesize(np.zeros(3), spec, 5, 1, init=np.zeros((4, 2), dtype=int))


class TestStandIn:
    def test_bundled_file_matches_generator(self):
        np.testing.assert_array_equal(load_scs_standin().values, make_scs_standin().values)

    def test_shape(self):
        data = load_scs_standin()
        assert (data.n, data.p, data.m) == (3376, 10, 3)
        binary = dichotomize(data)
        assert binary.m == 1 and set(np.unique(binary.values)) == {0, 1}


@pytest.fixture(scope="module")
def source():
    return dichotomize(load_scs_standin())


class TestPlan:
    def test_single_dataset(self, source):
        out = run_simulation_plan(SimulationPlan(source, N=200, P=4, K_str=1, K_sample=1, seed=3))
        assert len(out) == 1
        prov = out[0].provenance
        assert {"structure_index", "sample_index", "structure_seed", "sample_seed", "columns"} <= set(prov)
        assert out[0].data.values.shape == (200, 4)

    @pytest.mark.parametrize("kind", ["smallworld", "random", "full"])
    def test_count_and_zero_constraints(self, source, kind):
        out = run_simulation_plan(SimulationPlan(source, N=150, P=5, structure_type=kind,
                                                 K_str=3, K_sample=2, seed=4))
        assert len(out) == 6
        for sim in out:
            spec = sim.data.spec
            free = spec.edge_mask(sim.structure.edges)
            assert np.all(sim.true_theta[~free] == 0.0)

    def test_deterministic_and_prefix_stable(self, source):
        big = run_simulation_plan(SimulationPlan(source, N=100, P=4, K_str=2, K_sample=3, seed=8))
        again = run_simulation_plan(SimulationPlan(source, N=100, P=4, K_str=2, K_sample=3, seed=8))
        small = run_simulation_plan(SimulationPlan(source, N=100, P=4, K_str=1, K_sample=3, seed=8))
        for a, b in zip(big, again):
            np.testing.assert_array_equal(a.data.values, b.data.values)
        for a, b in zip(small, big):
            np.testing.assert_array_equal(a.data.values, b.data.values)

    def test_validation(self, source):
        with pytest.raises(ValidationError):
            SimulationPlan(source, N=100, P=11)
        with pytest.raises(ValidationError):
            SimulationPlan(source, N=100, P=4, structure_type="tree")

    @pytest.mark.slow
    def test_refit_recovers_generating_parameters(self, source):
        sim = run_simulation_plan(SimulationPlan(source, N=2000, P=6, K_str=1, K_sample=1, seed=12))[0]
        fit = mple(sim.data, structure=sim.structure)
        free = sim.data.spec.edge_mask(sim.structure.edges)
        # sandwich standard errors of the constrained MPLE
        h = pseudo_hessian(sim.data, fit.theta_star)[np.ix_(free, free)]
        u = score_outer_product(sim.data, fit.theta_star)[np.ix_(free, free)]
        hinv = np.linalg.inv(-h)
        se = np.sqrt(np.diag(hinv @ u @ hinv))
        assert np.all(np.abs(fit.theta_star[free] - sim.true_theta[free]) < 3 * se)
        assert np.all(fit.theta_star[~free] == 0.0)
