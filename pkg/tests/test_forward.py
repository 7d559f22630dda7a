import math

import numpy as np
import pytest

from invborn import (
    WaveMode,
    assemble,
    born_series,
    born_term,
    build_ball_grid,
    build_sphere_boundary,
    data_norm,
    incident_field,
    mu_closed_form,
    residual_certificate,
    solve_direct,
)
from invborn.greens import greens_kernel, self_cell_integral
from invborn.grid import Grid

INF = math.inf


def single_voxel_problem(kind="diffuse", k=1.3, w=0.1):
    grid = Grid(centers=np.zeros((1, 3)), weights=np.array([w]), spacing=0.5, radius_a=0.5)
    boundary = build_sphere_boundary(2.0, 1, 1)
    return assemble(WaveMode(kind, k), grid, boundary)


def test_zero_perturbation_gives_zero_data(small_ops):
    phi = solve_direct(small_ops, np.zeros(small_ops.n_nodes, dtype=complex))
    assert np.all(phi == 0)


@pytest.mark.parametrize("kind,sign", [("diffuse", 1.0), ("scalar", -1.0)])
def test_single_voxel_closed_form(kind, sign):
    ops = single_voxel_problem(kind=kind)
    k = ops.mode.k
    eta, w = 0.7, 0.1
    gs = ops.g_sv[0, 0]
    gd = ops.g_vd[0, 0]
    cself = ops.g_vv[0, 0]
    phi = solve_direct(ops, np.array([eta + 0j]))[0, 0]
    # 1x1 solve: u = g_s / (1 + sign k^2 eta C); phi = sign k^2 g_d eta w u
    expected = sign * k**2 * gs * eta * w * gd / (1.0 + sign * k**2 * eta * cself)
    assert phi == pytest.approx(expected, rel=1e-13)


def test_incident_field_is_source_row(small_ops):
    assert np.array_equal(incident_field(small_ops, 2), small_ops.g_sv[2])


def test_solve_rejects_singular_system():
    ops = single_voxel_problem(kind="diffuse", k=1.0)
    cself = ops.g_vv[0, 0].real
    eta_singular = -1.0 / cself  # makes 1 + k^2 eta C vanish
    with pytest.raises(ValueError, match="condition estimate"):
        solve_direct(ops, np.array([eta_singular + 0j]))


def test_term_order_one_single_voxel():
    ops = single_voxel_problem()
    k = ops.mode.k
    c = 0.4
    term = born_term(ops, [np.array([c + 0j])])[0, 0]
    expected = k**2 * ops.g_sv[0, 0] * c * 0.1 * ops.g_vd[0, 0]
    assert term == pytest.approx(expected, rel=1e-14)


def test_term_order_two_against_brute_force():
    grid = build_ball_grid(1.0, 0.55)  # 32 voxels
    boundary = build_sphere_boundary(2.0, 3, 4)
    mode = WaveMode.diffuse(1.0)
    ops = assemble(mode, grid, boundary)
    rng = np.random.default_rng(7)
    f1 = rng.normal(size=grid.n_nodes) + 1j * rng.normal(size=grid.n_nodes)
    f2 = rng.normal(size=grid.n_nodes) + 1j * rng.normal(size=grid.n_nodes)
    got = born_term(ops, [f1, f2])

    # independent double-loop quadrature of the order-2 kernel chain
    k = mode.k
    w = grid.weights
    expected = np.zeros((3, 4), dtype=complex)
    for s in range(3):
        for d in range(4):
            acc = 0.0 + 0j
            for j1 in range(grid.n_nodes):
                gs = greens_kernel(mode, np.linalg.norm(boundary.sources[s] - grid.centers[j1]))
                inner = 0.0 + 0j
                for j2 in range(grid.n_nodes):
                    if j1 == j2:
                        kern = self_cell_integral(mode, w[j1])
                    else:
                        r12 = np.linalg.norm(grid.centers[j1] - grid.centers[j2])
                        kern = greens_kernel(mode, r12) * w[j2]
                    gd = greens_kernel(
                        mode, np.linalg.norm(grid.centers[j2] - boundary.detectors[d])
                    )
                    inner += kern * f2[j2] * gd
                acc += gs * w[j1] * f1[j1] * inner
            expected[s, d] = -(k**4) * acc  # order-2 sign is negative for diffuse waves
    dev = np.abs(got - expected).max() / np.abs(expected).max()
    assert dev <= 1e-12


def test_term_multilinearity(small_ops):
    rng = np.random.default_rng(3)
    n = small_ops.n_nodes
    f1 = rng.normal(size=n) + 1j * rng.normal(size=n)
    f2 = rng.normal(size=n) + 1j * rng.normal(size=n)
    g1 = rng.normal(size=n) + 1j * rng.normal(size=n)
    c = 1.7 - 0.3j
    lhs = born_term(small_ops, [c * f1, f2])
    rhs = c * born_term(small_ops, [f1, f2])
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()
    lhs = born_term(small_ops, [f1 + g1, f2])
    rhs = born_term(small_ops, [f1, f2]) + born_term(small_ops, [g1, f2])
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()


def test_term_rejects_mismatched_factor(small_ops):
    with pytest.raises(ValueError, match="factor shape"):
        born_term(small_ops, [np.ones(small_ops.n_nodes + 1)])
    with pytest.raises(ValueError):
        born_term(small_ops, [])


def test_equal_factor_term_transposes_under_pair_swap():
    grid = build_ball_grid(1.0, 0.45)
    b = build_sphere_boundary(2.0, 5, 5)
    mode = WaveMode.diffuse(1.0)
    ops = assemble(mode, grid, b)
    f = np.cos(grid.centers[:, 0]) + 0j
    term = born_term(ops, [f, f])
    # sources and detectors are the same Fibonacci set, so swapping transposes
    assert np.abs(term - term.T).max() <= 1e-13 * np.abs(term).max()


def test_direct_solve_matches_series_on_compliant_instance():
    grid = build_ball_grid(1.0, 0.3)
    boundary = build_sphere_boundary(2.0, 8, 8)
    mode = WaveMode.diffuse(1.0)
    ops = assemble(mode, grid, boundary)
    amp = 0.3 / mu_closed_form(mode, 1.0, INF)
    eta = np.full(grid.n_nodes, amp, dtype=complex)
    phi = solve_direct(ops, eta)
    series = born_series(ops, eta, 30)
    rel = np.abs(phi - series.partial_sums[-1]).max() / np.abs(phi).max()
    assert rel <= 1e-8


def test_series_terms_zero_for_zero_field(small_ops):
    series = born_series(small_ops, np.zeros(small_ops.n_nodes), 4)
    for term in series.terms:
        assert np.all(term == 0)


def test_series_terms_decay_geometrically():
    grid = build_ball_grid(1.0, 0.3)
    boundary = build_sphere_boundary(2.0, 8, 8)
    mode = WaveMode.diffuse(1.0)
    ops = assemble(mode, grid, boundary)
    amp = 0.5 / mu_closed_form(mode, 1.0, INF)
    eta = np.full(grid.n_nodes, amp, dtype=complex)
    series = born_series(ops, eta, 8)
    norms = [data_norm(boundary, t, INF) for t in series.terms]
    for j in range(2, 7):
        assert norms[j + 1] / norms[j] <= 0.5 * 1.2


def test_partial_sums_recompute_exactly(small_ops):
    eta = np.full(small_ops.n_nodes, 0.2, dtype=complex)
    series = born_series(small_ops, eta, 5)
    recomputed = sum(series.terms)
    assert np.array_equal(series.partial_sums[-1], recomputed)


def test_diffuse_data_is_real(small_ops):
    eta = np.full(small_ops.n_nodes, 0.3, dtype=complex)
    phi = solve_direct(small_ops, eta)
    assert np.abs(phi.imag).max() == 0.0


def test_scalar_data_symmetric_for_identical_arrays():
    grid = build_ball_grid(1.0, 0.45)
    b = build_sphere_boundary(2.0, 6, 6)
    ops = assemble(WaveMode.scalar(1.0), grid, b)
    eta = (0.1 * np.cos(2 * grid.centers[:, 2])).astype(complex)
    phi = solve_direct(ops, eta)
    assert np.abs(phi - phi.T).max() <= 1e-12 * np.abs(phi).max()


class TestResidualCertificate:
    def setup_method(self):
        grid = build_ball_grid(1.0, 0.3)
        boundary = build_sphere_boundary(2.0, 8, 8)
        self.mode = WaveMode.diffuse(1.0)
        self.ops = assemble(self.mode, grid, boundary)

    def test_empirical_below_bound_on_compliant_instance(self):
        amp = 0.4 / mu_closed_form(self.mode, 1.0, INF)
        eta = np.full(self.ops.n_nodes, amp, dtype=complex)
        for rec in residual_certificate(self.ops, eta, 5):
            assert rec["applicable"]
            for emp, bnd in zip(rec["empirical"], rec["bound"]):
                assert emp <= bnd

    def test_bound_values_match_geometric_formula(self):
        from invborn import born_series, closed_form_constants, field_norm

        amp = 0.4 / mu_closed_form(self.mode, 1.0, INF)
        eta = np.full(self.ops.n_nodes, amp, dtype=complex)
        series = born_series(self.ops, eta, 4)
        cs = closed_form_constants(self.mode, 1.0, 2.0)
        for p, label, mu_p, nu_p in (
            (2, "2", cs.mu_2, cs.nu_2),
            (INF, "inf", cs.mu_inf, cs.nu_inf),
        ):
            norm_p = field_norm(self.ops.grid, eta, p)
            assert series.eta_norms[label] == pytest.approx(norm_p, rel=1e-14)
            q = mu_p * norm_p
            for n, bound in enumerate(series.remainder_bounds[label], start=1):
                expected = (nu_p / mu_p) * q ** (n + 1) / (1 - q)
                assert bound == pytest.approx(expected, rel=1e-13)

    def test_bounds_decrease_monotonically(self):
        amp = 0.4 / mu_closed_form(self.mode, 1.0, INF)
        eta = np.full(self.ops.n_nodes, amp, dtype=complex)
        for rec in residual_certificate(self.ops, eta, 6):
            bnd = rec["bound"]
            assert all(b2 < b1 for b1, b2 in zip(bnd, bnd[1:]))

    def test_zero_field_gives_zero_remainders(self):
        for rec in residual_certificate(self.ops, np.zeros(self.ops.n_nodes), 3):
            assert all(e == 0 for e in rec["empirical"])
            assert all(b == 0 for b in rec["bound"])

    def test_scalar_mode_certificate(self):
        grid = build_ball_grid(1.0, 0.3)
        boundary = build_sphere_boundary(2.0, 8, 8)
        mode = WaveMode.scalar(1.0)
        ops = assemble(mode, grid, boundary)
        amp = 0.3 / mu_closed_form(mode, 1.0, INF)
        eta = np.full(ops.n_nodes, amp, dtype=complex)
        for rec in residual_certificate(ops, eta, 5):
            assert rec["applicable"]
            for emp, bnd in zip(rec["empirical"], rec["bound"]):
                assert emp <= bnd

    def test_noncompliant_instance_flagged(self):
        amp = 1.5 / mu_closed_form(self.mode, 1.0, INF)
        eta = np.full(self.ops.n_nodes, amp, dtype=complex)
        records = residual_certificate(self.ops, eta, 3)
        flags = {rec["p"]: rec["applicable"] for rec in records}
        assert flags["inf"] is False
        # the direct solve and empirical remainders are still produced
        assert all(len(rec["empirical"]) == 3 for rec in records)
