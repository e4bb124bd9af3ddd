import random

import pytest
from hypothesis import given, settings, strategies as st

from phi4lab import (
    ScaledGraph,
    TreeTopology,
    build_clusters,
    verify_identities,
    rho,
    scale_sum,
    divergence_scan,
    enumerate_connected,
)


FAMILIES = {}


def family(n, r):
    if (n, r) not in FAMILIES:
        FAMILIES[(n, r)] = list(enumerate_connected(n, 0, r))
    return FAMILIES[(n, r)]


class TestClusterConstruction:
    def test_two_vertex_chain_example(self):
        g = family(2, 0)[0]
        sg = ScaledGraph(graph=g, line_scales=(1, 2, 2, 2), N=2)
        tree = build_clusters(sg)
        nodes = tree.nontrivial_nodes()
        assert len(nodes) == 2
        assert {nd.h for nd in nodes} == {1, 2}
        assert all(nd.vertices == frozenset({0, 1}) for nd in nodes)
        assert len(tree.leaves()) == 2

    def test_leaves_are_single_vertices_at_Nplus1(self):
        g = family(1, 2)[0]
        sg = ScaledGraph(graph=g, line_scales=(1,) * len(g.pairing), N=3)
        tree = build_clusters(sg)
        leaves = tree.leaves()
        assert len(leaves) == len(g.elements)
        assert all(leaf.h == 4 for leaf in leaves)

    def test_rejects_out_of_range_scales(self):
        g = family(1, 0)[0]
        with pytest.raises(ValueError):
            ScaledGraph(graph=g, line_scales=(0, 1), N=2)

    def test_rejects_wrong_label_count(self):
        g = family(1, 0)[0]
        with pytest.raises(ValueError):
            ScaledGraph(graph=g, line_scales=(1,), N=2)


class TestIdentities:
    def test_chain_example_values(self):
        g = family(2, 0)[0]
        rep = verify_identities(build_clusters(
            ScaledGraph(graph=g, line_scales=(1, 2, 2, 2), N=2)))
        assert rep.ok
        assert rep.lhs_halflines == rep.rhs_halflines > 0

    def test_fuzzed_trees(self):
        rng = random.Random(7)
        pool = [(1, 0), (1, 2), (1, 4), (2, 0), (2, 2), (3, 0)]
        for _ in range(400):
            n, r = rng.choice(pool)
            g = rng.choice(family(n, r))
            N = rng.randint(2, 5)
            scales = tuple(rng.randint(1, N) for _ in g.pairing)
            rep = verify_identities(build_clusters(ScaledGraph(g, scales, N)))
            assert rep.ok, (n, r, scales, rep)

    @settings(max_examples=40, deadline=None)
    @given(data=st.data())
    def test_identities_hold_under_relabeled_scales(self, data):
        n, r = data.draw(st.sampled_from([(1, 0), (1, 2), (2, 0), (2, 2)]))
        g = data.draw(st.sampled_from(family(n, r)))
        N = data.draw(st.integers(2, 4))
        scales = tuple(data.draw(st.integers(1, N)) for _ in g.pairing)
        rep = verify_identities(build_clusters(ScaledGraph(g, scales, N)))
        assert rep.ok

    def test_uniform_shift_scales_lhs_linearly(self):
        # raising every scale by one adds (s_v - 1) resp. n_inner_v per node
        g = family(2, 0)[0]
        r1 = verify_identities(build_clusters(ScaledGraph(g, (1, 1, 1, 1), N=3)))
        r2 = verify_identities(build_clusters(ScaledGraph(g, (2, 2, 2, 2), N=3)))
        assert r1.ok and r2.ok
        assert r2.lhs_halflines == 2 * r1.lhs_halflines


class TestRho:
    def test_tadpole_marginal_d2_divergent_d3(self):
        assert rho(1, 0, 2, 2)[0] == 0.0  # log divergence, c_N grows linearly
        assert rho(1, 0, 2, 3)[0] == -1.0

    def test_chain_improvement_only_in_d3(self):
        value, improved = rho(2, 0, 2, 3)
        assert value == 0.0 and improved == 0.5
        value2, improved2 = rho(2, 0, 2, 2)
        assert value2 == improved2 == 2.0

    def test_external_legs_are_strongly_irrelevant(self):
        assert rho(1, 2, 2, 2)[0] == rho(1, 0, 2, 2)[0] + 2 * 2.0


class TestScaleSums:
    def test_single_node_geometric_third(self):
        verdict = scale_sum(TreeTopology(n=2, r=0, n_e=0), d=2, gamma=2.0)
        assert verdict.limit == pytest.approx(1.0 / 3.0)
        assert verdict.finite_sums[16] == pytest.approx(1.0 / 3.0, abs=1e-8)

    def test_finite_sums_increase_to_limit(self):
        verdict = scale_sum(TreeTopology(n=2, r=0, n_e=0), d=2, gamma=2.0)
        s4, s8, s16 = (verdict.finite_sums[k] for k in (4, 8, 16))
        assert s4 < s8 < s16 < verdict.limit

    def test_improved_chain_converges(self):
        verdict = scale_sum(TreeTopology(n=2, r=0, n_e=2), d=3, gamma=2.0)
        assert verdict.classification == "convergent"
        assert verdict.limit is not None

    def test_unimproved_chain_is_marginal_and_grows_linearly(self):
        verdict = scale_sum(TreeTopology(n=2, r=0, n_e=2), d=3, gamma=2.0,
                            N_max=(4, 8, 16), improve=False)
        assert verdict.classification == "marginal"
        assert verdict.limit is None
        assert verdict.finite_sums[8] == pytest.approx(8.0)
        assert verdict.finite_sums[16] / verdict.finite_sums[8] == pytest.approx(2.0)

    def test_nested_tree_sum_is_product_of_series(self):
        child = TreeTopology(n=1, r=2, n_e=2)
        top = TreeTopology(n=2, r=0, n_e=0, children=[child])
        verdict = scale_sum(top, d=2, gamma=2.0)
        x1 = 2.0 ** -verdict.exponents[0][1]
        x2 = 2.0 ** -verdict.exponents[1][1]
        assert verdict.limit == pytest.approx(x1 / (1 - x1) * x2 / (1 - x2))


class TestDivergenceScan:
    def test_d2_catalog_is_vacuum_only_plus_tadpole(self):
        names = {e["name"] for e in divergence_scan(2)}
        assert "tadpole" in names and "vacuum-1" in names
        assert "chain" not in {e["name"] for e in divergence_scan(2)
                               if e["class"] == "divergent"}

    def test_d3_chain_entry(self):
        chain = [e for e in divergence_scan(3) if e["name"] == "chain"][0]
        assert chain["rho"] == 0.0 and chain["rho_bar"] == 0.5
        assert chain["class"] == "convergent"
        assert "subtraction" in chain["cure"]

    def test_d4_classes_not_cured(self):
        bad = [e for e in divergence_scan(4) if e["rho"] <= 0]
        assert bad and all("not cured" in e["cure"] for e in bad)

    def test_d5_nonrenormalizable(self):
        bad = [e for e in divergence_scan(5) if e["rho"] < 0]
        assert bad and all("no formal counterterm" in e["cure"] for e in bad)

    def test_unknown_dimension_rejected(self):
        with pytest.raises(ValueError):
            divergence_scan(6)
