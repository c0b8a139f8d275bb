import numpy as np
import pytest

from ocgt import graph


def test_erdos_renyi_p1_is_complete():
    topo = graph.gen_erdos_renyi(2, 1.0, seed=0)
    assert topo.edges == frozenset({(0, 1)})
    topo4 = graph.gen_erdos_renyi(4, 1.0, seed=0)
    assert len(topo4.edges) == 6


def test_erdos_renyi_experiment_regime_connected():
    topo = graph.gen_erdos_renyi(30, 0.15, seed=7)
    assert topo.n == 30
    assert topo.is_connected()


def test_erdos_renyi_infeasible_raises():
    with pytest.raises(graph.InfeasibleTopologyError):
        graph.gen_erdos_renyi(10, 1e-9, seed=0)


def test_ring_and_complete_small():
    assert graph.gen_ring(3).edges == frozenset({(0, 1), (1, 2), (0, 2)})
    assert graph.gen_complete(3).edges == graph.gen_ring(3).edges
    with pytest.raises(ValueError):
        graph.gen_ring(2)


def test_metropolis_hand_values():
    ring3 = graph.metropolis_weights(graph.gen_ring(3))
    assert np.allclose(ring3.w, np.full((3, 3), 1.0 / 3.0))

    path3 = graph.metropolis_weights(graph.gen_path(3))
    expected = np.array(
        [[2 / 3, 1 / 3, 0.0], [1 / 3, 1 / 3, 1 / 3], [0.0, 1 / 3, 2 / 3]]
    )
    assert np.allclose(path3.w, expected)

    k2 = graph.metropolis_weights(graph.gen_complete(2))
    assert np.allclose(k2.w, 0.5)


def test_spectral_report_hand_values():
    mix = graph.MixingMatrix(3, np.full((3, 3), 1.0 / 3.0))
    rep = graph.spectral_report(mix, 0.5)
    # W_eta - (1/n)11^T = (1 - eta)(I - (1/3)11^T), norm |1 - eta|
    assert rep.rho_eta == pytest.approx(0.5, abs=1e-10)
    assert rep.w1 + rep.w2 == pytest.approx(2.0)

    # the ring-3 Metropolis matrix is exactly (1/3)11^T, so the damped
    # mixer at eta = 1 coincides with the averaging projector
    ring3 = graph.metropolis_weights(graph.gen_ring(3))
    assert graph.spectral_report(ring3, 1.0).rho_eta == pytest.approx(0.0, abs=1e-9)
    # at eta = 0 the damped mixer is the identity, whose distance to the
    # projector is always 1
    assert graph.spectral_report(ring3, 0.0).rho_eta == pytest.approx(1.0, abs=1e-9)


def test_spectral_report_eta_one_matches_eigendecomposition():
    # at eta = 1 the report reduces to the second-largest eigenvalue
    # magnitude of W; dense eigendecomposition is the independent oracle
    for seed in range(5):
        topo = graph.gen_erdos_renyi(8, 0.4, seed=seed)
        mix = graph.metropolis_weights(topo)
        eigs = np.sort(np.abs(np.linalg.eigvalsh(mix.w)))
        rep = graph.spectral_report(mix, 1.0)
        assert rep.rho_eta == pytest.approx(eigs[-2], abs=1e-9)


def test_mixing_matrix_corpus_invariants():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n = int(rng.integers(3, 15))
        p = float(rng.uniform(0.3, 0.9))
        topo = graph.gen_erdos_renyi(n, p, seed=1000 + trial)
        mix = graph.metropolis_weights(topo)
        w = mix.w
        assert np.allclose(w, w.T, atol=1e-12)
        assert np.max(np.abs(w.sum(axis=1) - 1.0)) <= 1e-12
        assert np.max(np.abs(w.sum(axis=0) - 1.0)) <= 1e-12
        # off-diagonal sparsity pattern matches the edge set
        for i in range(n):
            for j in range(i + 1, n):
                if (i, j) in topo.edges:
                    assert w[i, j] > 0
                else:
                    assert w[i, j] == 0.0
        eta = float(rng.uniform(0.01, 0.99))
        assert graph.spectral_report(mix, eta).rho_eta < 1.0


def test_metropolis_permutation_equivariance():
    rng = np.random.default_rng(3)
    topo = graph.gen_erdos_renyi(7, 0.5, seed=11)
    perm = rng.permutation(7)
    edges_p = frozenset(
        (min(perm[i], perm[j]), max(perm[i], perm[j])) for i, j in topo.edges
    )
    w = graph.metropolis_weights(topo).w
    w_p = graph.metropolis_weights(graph.Topology(7, edges_p)).w
    # with q[i, perm[i]] = 1, relabeled weights satisfy w_p = q^T w q
    q = np.eye(7)[perm]
    assert np.allclose(q.T @ w @ q, w_p, atol=1e-15)


def test_topology_roundtrip(tmp_path):
    topo = graph.gen_erdos_renyi(9, 0.4, seed=5)
    path = tmp_path / "topo.txt"
    graph.save_topology(topo, path)
    loaded = graph.load_topology(path)
    assert loaded.n == topo.n
    assert loaded.edges == topo.edges
