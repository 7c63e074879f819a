import numpy as np
import pytest

from gridnorm import (
    DisconnectedNetworkError,
    assemble,
    build_laplacian,
    deflate,
    helmert_basis,
    lyapunov_solve,
)
from gridnorm.cases import homogeneous_network, triangle_network, two_node_network
from gridnorm.dynamics import StateSpace
from gridnorm.harness import instance_rng, random_connected_network
from gridnorm.network import Edge, Node, PowerNetwork


def _ss(net):
    return assemble(net, build_laplacian(net))


def _assert_multiset_close(got, expect, tol):
    got = list(np.asarray(got, dtype=complex))
    for e in np.asarray(expect, dtype=complex):
        gaps = [abs(g - e) for g in got]
        k = int(np.argmin(gaps))
        assert gaps[k] <= tol, f"no match for {e} within {tol}; residual pool {got}"
        got.pop(k)
    assert not got


def test_assemble_two_node_unit():
    ss = _ss(two_node_network())
    expect = np.array(
        [[0, 0, 1, 0], [0, 0, 0, 1], [-1, 1, -1, 0], [1, -1, 0, -1]], dtype=float
    )
    np.testing.assert_allclose(ss.a, expect)
    np.testing.assert_allclose(ss.c[:2, :2], [[1, -1], [-1, 1]])
    np.testing.assert_allclose(ss.c[2:, 2:], np.eye(2))


def test_assemble_heterogeneous_block():
    nodes = (
        Node(id="a", inertia=2.0, damping=1.0),
        Node(id="b", inertia=4.0, damping=3.0),
    )
    net = PowerNetwork(nodes=nodes, edges=(Edge(0, 1, 1.0),), gamma=1.0)
    ss = _ss(net)
    np.testing.assert_allclose(ss.a[2:, :2], [[-0.5, 0.5], [0.25, -0.25]])


def test_zero_mode_invariants():
    for i in range(25):
        net = random_connected_network(instance_rng(31, i), 2, 8, 0.1, 10.0)
        ss = _ss(net)
        n = net.n
        k0 = np.concatenate([np.ones(n), np.zeros(n)])
        kbar = np.concatenate([net.dampings, net.inertias])
        assert np.linalg.norm(ss.a @ k0) <= 1e-10 * max(1.0, np.linalg.norm(ss.a))
        assert np.linalg.norm(kbar @ ss.a) <= 1e-10 * max(1.0, np.linalg.norm(ss.a)) * np.linalg.norm(kbar)
        assert np.linalg.norm(kbar @ ss.r) <= 1e-8 * max(1.0, np.linalg.norm(ss.r)) * np.linalg.norm(kbar)


def test_helmert_basis_properties():
    for n in range(2, 12):
        u = helmert_basis(n)
        np.testing.assert_allclose(u.T @ u, np.eye(n - 1), atol=1e-12)
        np.testing.assert_allclose(u.T @ np.ones(n), 0.0, atol=1e-12)


def test_helmert_two_nodes_closed_form():
    u = helmert_basis(2)
    np.testing.assert_allclose(u.ravel(), [1 / np.sqrt(2), -1 / np.sqrt(2)])


def test_deflate_shapes_two_node():
    defl = deflate(_ss(two_node_network()))
    assert defl.a_r.shape == (3, 3)
    assert defl.r_r.shape == (3, 2)
    assert defl.c_r.shape == (4, 3)
    assert defl.spectral_abscissa < 0


def test_deflate_triangle_eigenvalues():
    """Modal pairs of s^2 + s + 3 (twice) plus the surviving -1 from the zero mode."""
    defl = deflate(_ss(triangle_network()))
    got = np.linalg.eigvals(defl.a_r)
    pair = np.roots([1.0, 1.0, 3.0])
    _assert_multiset_close(got, np.concatenate([pair, pair, [-1.0]]), 1e-8)
    assert np.all(got.real < 0)


def test_deflate_disconnected_raises():
    net = homogeneous_network(4, [(0, 1), (2, 3)])
    with pytest.raises(DisconnectedNetworkError):
        deflate(_ss(net))


def test_deflation_removes_exactly_the_zero_mode():
    for i in range(25):
        net = random_connected_network(instance_rng(32, i), 2, 8, 0.1, 10.0)
        ss = _ss(net)
        defl = deflate(ss)
        full = np.linalg.eigvals(ss.a)
        keep = np.argmin(np.abs(full))
        reduced_expect = np.delete(full, keep)
        got = np.linalg.eigvals(defl.a_r)
        scale = max(1.0, float(np.max(np.abs(full))))
        _assert_multiset_close(got, reduced_expect, 1e-7 * scale)


def test_output_reconstruction_consistency():
    rng = np.random.default_rng(77)
    for i in range(10):
        net = random_connected_network(instance_rng(33, i), 2, 7, 0.1, 10.0)
        ss = _ss(net)
        defl = deflate(ss)
        n = net.n
        theta_r = rng.standard_normal(n - 1)
        omega = rng.standard_normal(n)
        x_full = np.concatenate([defl.u_basis @ theta_r, omega])
        x_red = np.concatenate([theta_r, omega])
        np.testing.assert_allclose(defl.c_r @ x_red, ss.c @ x_full, atol=1e-12)


def _h2_with_basis(ss, u):
    """Squared H2 norm of the reduction onto an arbitrary orthonormal basis of 1-perp."""
    n = ss.n
    lap = ss.laplacian
    a_r = np.zeros((2 * n - 1, 2 * n - 1))
    a_r[: n - 1, n - 1 :] = u.T
    a_r[n - 1 :, : n - 1] = -(lap @ u) / ss.m_diag[:, None]
    a_r[n - 1 :, n - 1 :] = ss.a[n:, n:]
    r_r = np.zeros((2 * n - 1, n))
    r_r[n - 1 :, :] = ss.r[n:, :]
    c_r = np.zeros((2 * n, 2 * n - 1))
    c_r[:n, : n - 1] = lap @ u
    c_r[n:, n - 1 :] = np.eye(n)
    p = lyapunov_solve(a_r, r_r @ r_r.T)
    return float(np.sum((c_r @ p) * c_r))


def test_output_statistics_invariant_to_basis_choice():
    rng = np.random.default_rng(123)
    for i in range(10):
        net = random_connected_network(instance_rng(34, i), 3, 7, 0.1, 10.0)
        ss = _ss(net)
        n = net.n
        h2_helmert = _h2_with_basis(ss, helmert_basis(n))
        # randomized orthonormal basis of the complement of ones
        m = np.column_stack([np.ones(n), rng.standard_normal((n, n - 1))])
        q, _ = np.linalg.qr(m)
        u_rand = q[:, 1:]
        h2_rand = _h2_with_basis(ss, u_rand)
        assert abs(h2_helmert - h2_rand) <= 1e-8 * max(1.0, abs(h2_helmert))


def test_gamma_scaling_hits_only_r():
    net = random_connected_network(instance_rng(35, 0), 2, 6, 0.1, 10.0)
    alpha = 3.7
    net2 = PowerNetwork(nodes=net.nodes, edges=net.edges, gamma=alpha * net.gamma)
    ss1, ss2 = _ss(net), _ss(net2)
    np.testing.assert_allclose(ss2.a, ss1.a)
    np.testing.assert_allclose(ss2.c, ss1.c)
    np.testing.assert_allclose(ss2.r, np.sqrt(alpha) * ss1.r, rtol=1e-12)


def test_single_node_deflates_to_frequency_mode():
    net = PowerNetwork(nodes=(Node(id="solo", inertia=2.0, damping=3.0),), edges=(), gamma=1.0)
    ss = _ss(net)
    defl = deflate(ss)
    assert defl.a_r.shape == (1, 1)
    np.testing.assert_allclose(defl.a_r, [[-1.5]])


def test_deflate_checks_statespace_not_network():
    """deflate works from any StateSpace with the right block structure."""
    net = triangle_network()
    ss = _ss(net)
    zeroed = StateSpace(a=ss.a, r=np.zeros_like(ss.r), c=ss.c, m_diag=ss.m_diag, d_diag=ss.d_diag)
    defl = deflate(zeroed)
    assert defl.spectral_abscissa < 0
    np.testing.assert_allclose(defl.r_r, 0.0)
