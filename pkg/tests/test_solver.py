import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from inls_lab import solver as sv
from inls_lab.exponent_core import INF, Pair


@pytest.fixture(scope="module")
def line():
    return sv.make_grid(1, 40.0, 256)


def random_field(grid, seed):
    rng = np.random.default_rng(seed)
    return sv.Field(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))


# --- grid ------------------------------------------------------------------


def test_make_grid_examples():
    g = sv.make_grid(1, 2 * math.pi * 16, 512)
    assert g.size == 512
    assert g.spacing[0] == pytest.approx(2 * math.pi * 16 / 512)
    assert sv.make_grid(2, 20, 128).shape == (128, 128)
    with pytest.raises(ValueError, match="power of two"):
        sv.make_grid(1, 10, 100)
    with pytest.raises(ValueError):
        sv.make_grid(4, 10, 16)


def test_grid_nodes_start_at_the_left_edge():
    g = sv.make_grid(1, 8.0, 16)
    x = g.axes()[0]
    assert x[0] == -4.0 and x[-1] < 4.0


# --- linear flow -----------------------------------------------------------


def test_plane_wave_is_an_eigenfunction(line):
    k = 2 * math.pi * 5 / 40.0
    u = sv.sample_initial(sv.PlaneWave((k,)), line)
    t = 0.37
    out = sv.linear_propagate(u, t)
    x = line.axes()[0]
    assert np.max(np.abs(out.values - np.exp(1j * (k * x - k**2 * t)))) < 1e-12


def test_free_gaussian_matches_closed_form():
    grid = sv.make_grid(1, 80.0, 1024)
    u0 = sv.sample_initial(sv.Gaussian(1.0, 1.0), grid)
    out = sv.linear_propagate(u0, 0.1)
    exact = oracles.free_gaussian(grid.axes()[0], 0.1)
    assert np.linalg.norm(out.values - exact) / np.linalg.norm(exact) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 10))
def test_linear_flow_is_unitary(seed, t):
    grid = sv.make_grid(2, 12.0, 32)
    u = random_field(grid, seed)
    assert sv.l2_norm(sv.linear_propagate(u, t)) == pytest.approx(sv.l2_norm(u), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 5), st.floats(0, 5))
def test_linear_flow_group_law(seed, s, t):
    grid = sv.make_grid(1, 20.0, 128)
    u = random_field(grid, seed)
    a = sv.linear_propagate(sv.linear_propagate(u, s), t).values
    b = sv.linear_propagate(u, s + t).values
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(b)


# --- potential -------------------------------------------------------------


def test_grid_cap_is_one_on_the_unit_sphere():
    grid = sv.make_grid(1, 8.0, 64)
    w = sv.potential_weights(grid, sv.PotentialSpec(0.5, 2.0, regularization=sv.GridCap()))
    x = grid.axes()[0]
    assert w[np.argmin(np.abs(x - 1.0))] == 1.0


def test_epsilon_shift_at_the_origin():
    grid = sv.make_grid(2, 8.0, 32)
    w = sv.potential_weights(grid, sv.PotentialSpec(0.5, 2.0, regularization=sv.EpsilonShift(0.1)))
    centre = (16, 16)
    assert w[centre] == pytest.approx(0.1**-0.5, rel=1e-15)


def test_zero_weight_exponent_gives_ones(line):
    assert np.all(sv.potential_weights(line, sv.PotentialSpec(0.0, 2.0)) == 1.0)


def test_default_regularization_is_one_spacing(line):
    spec = sv.PotentialSpec(0.25, 3.0)
    assert spec.describe(line) == f"EpsilonShift(eps_reg={40 / 256:g})"


@given(st.floats(0.05, 1.5))
def test_weight_is_below_one_outside_the_unit_ball(b):
    grid = sv.make_grid(2, 10.0, 32)
    w = sv.potential_weights(grid, sv.PotentialSpec(b, 2.0))
    r = np.sqrt(sum(c**2 for c in np.meshgrid(*grid.axes(), indexing="ij")))
    assert np.all(w[r >= 1] <= 1.0)


# --- nonlinear step --------------------------------------------------------


def test_nonlinear_substep_only_rotates_the_phase(line):
    u = sv.Field(line, np.full(line.shape, 0.7))
    out = sv.nonlinear_substep(u, 0.1, sv.PotentialSpec(0.25, 3.0, 1))
    assert np.allclose(np.abs(out.values), 0.7, rtol=0, atol=1e-15)
    assert not np.allclose(out.values.imag, 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.floats(1e-4, 0.1))
def test_split_step_conserves_mass(seed, dt):
    grid = sv.make_grid(1, 20.0, 128)
    u = random_field(grid, seed)
    out = sv.split_step(u, dt, sv.PotentialSpec(0.25, 3.0, -1))
    assert sv.mass(out) == pytest.approx(sv.mass(u), rel=1e-13)


def test_soliton_shape_survives_half_step_refinement():
    # cubic NLS bright soliton sech profile: self-convergence at dt and dt/2
    grid = sv.make_grid(1, 40.0, 256)
    x = grid.axes()[0]
    u0 = sv.Field(grid, np.sqrt(2) / np.cosh(x))
    spec = sv.PotentialSpec(0.0, 2.0, 1)
    coarse = sv.evolve(u0, 1.0, 1e-3, spec, sample_every=1000).field
    fine = sv.evolve(u0, 1.0, 5e-4, spec, sample_every=2000).field
    assert np.linalg.norm(np.abs(coarse.values) - np.abs(u0.values)) / np.linalg.norm(u0.values) < 1e-3
    assert np.linalg.norm(coarse.values - fine.values) / np.linalg.norm(fine.values) < 1e-5


# --- evolve ----------------------------------------------------------------


def test_zero_data_stays_zero(line):
    res = sv.evolve(sv.Field(line, np.zeros(line.shape)), 0.1, 0.01, sv.PotentialSpec(0.25, 3.0), hs={"1": 1.0})
    assert not np.any(res.field.values)
    d = res.diagnostics
    assert set(d.mass_trace) == {0.0} and set(d.energy_trace) == {0.0}
    assert d.status == "completed" and d.relative_mass_drift() == 0.0


def test_focusing_large_data_trips_the_ceiling():
    grid = sv.make_grid(2, 10.0, 64)
    u0 = sv.sample_initial(sv.Gaussian(0.6, 4.0), grid)
    res = sv.evolve(u0, 0.5, 1e-4, sv.PotentialSpec(0.5, 2.0, 1), ceiling_factor=3.0, sample_every=50)
    assert res.diagnostics.status == "suspected blow-up"


def test_nan_is_reported_with_the_step(line):
    u0 = sv.Field(line, np.full(line.shape, 1e200))
    with pytest.raises(sv.NaNEncountered) as info:
        sv.evolve(u0, 0.01, 0.001, sv.PotentialSpec(0.25, 3.0, -1))
    assert info.value.step == 1


def test_evolve_validates_times(line):
    u0 = sv.sample_initial(sv.Gaussian(), line)
    with pytest.raises(ValueError):
        sv.evolve(u0, 0.1, 0.2, sv.PotentialSpec(0.25, 3.0))


def test_diagnostics_times_increase_and_columns_align(line):
    u0 = sv.sample_initial(sv.Gaussian(), line)
    d = sv.evolve(u0, 0.1, 0.001, sv.PotentialSpec(0.25, 3.0), sample_every=7, hs={"1/2": 0.5}).diagnostics
    assert all(a < b for a, b in zip(d.times, d.times[1:]))
    assert d.times[-1] == pytest.approx(0.1)
    assert d.header() == ["time", "mass", "energy", "l2", "hs_1/2"]
    lines = d.to_csv().splitlines()
    assert lines[0] == "time,mass,energy,l2,hs_1/2"
    assert len(lines) == len(d.times) + 1


# --- norms -----------------------------------------------------------------


def test_unit_mass_gaussian(line):
    u = sv.sample_initial(sv.Gaussian(1.3, "unit-mass"), line)
    assert sv.mass(u) == pytest.approx(1.0, abs=1e-10)


def test_gaussian_mass_against_the_integral():
    grid = sv.make_grid(2, 20.0, 64)
    u = sv.sample_initial(sv.Gaussian(1.2, 0.8), grid)
    assert sv.mass(u) == pytest.approx(oracles.gaussian_mass(1.2, 0.8, 2), rel=1e-10)


@given(st.floats(0, 2 * math.pi))
def test_phase_leaves_mass_unchanged(phi):
    grid = sv.make_grid(1, 20.0, 64)
    u = sv.sample_initial(sv.Gaussian(), grid)
    v = u.with_values(np.exp(1j * phi) * u.values)
    assert sv.mass(v) == pytest.approx(sv.mass(u), rel=1e-15)
    assert sv.mass(sv.Field(grid, np.zeros(grid.shape))) == 0.0


@pytest.mark.parametrize("lam", [1, -1])
def test_plane_wave_energy(lam):
    L, k, alpha = 2 * math.pi, 3.0, 2.0
    grid = sv.make_grid(1, L, 64)
    u = sv.sample_initial(sv.PlaneWave((k,), 0.5), grid)
    spec = sv.PotentialSpec(0.0, alpha, lam)
    assert sv.energy(u, spec) == pytest.approx(oracles.plane_wave_energy(k, 0.5, L, lam, alpha), rel=1e-12)


def test_defocusing_energy_is_nonnegative():
    grid = sv.make_grid(1, 20.0, 128)
    u = random_field(grid, 4)
    assert sv.energy(u, sv.PotentialSpec(0.25, 3.0, -1)) >= 0
    assert sv.energy(sv.Field(grid, np.zeros(grid.shape)), sv.PotentialSpec(0.25, 3.0, -1)) == 0


@given(st.integers(-10, 10), st.floats(0, 3))
def test_single_mode_sobolev_norm(index, s):
    grid = sv.make_grid(1, 2 * math.pi, 64)
    k = float(index)
    u = sv.sample_initial(sv.PlaneWave((k,)), grid)
    assert sv.sobolev_norm(u, s) == pytest.approx(abs(k) ** s * sv.l2_norm(u), rel=1e-12, abs=1e-12)


def test_zero_regularity_is_the_l2_norm(line):
    u = random_field(line, 1)
    assert sv.sobolev_norm(u, 0) == sv.l2_norm(u) == math.sqrt(sv.mass(u))


def test_gaussian_h1_against_the_integral():
    grid = sv.make_grid(1, 40.0, 512)
    u = sv.sample_initial(sv.Gaussian(1.5, 2.0), grid)
    assert sv.sobolev_norm(u, 1) ** 2 == pytest.approx(oracles.gaussian_h1_squared(1.5, 2.0), rel=1e-8)


def test_inhomogeneous_norm_dominates():
    grid = sv.make_grid(1, 20.0, 128)
    u = random_field(grid, 2)
    assert sv.sobolev_norm(u, 1, homogeneous=False) >= sv.sobolev_norm(u, 1)


# --- fractional derivative -------------------------------------------------


def test_zero_order_derivative_is_the_identity(line):
    u = random_field(line, 3)
    assert np.allclose(sv.fractional_derivative(u, 0).values, u.values, rtol=0, atol=1e-14)


def test_second_order_derivative_on_a_mode():
    grid = sv.make_grid(1, 2 * math.pi, 64)
    u = sv.sample_initial(sv.PlaneWave((4.0,)), grid)
    assert np.allclose(sv.fractional_derivative(u, 2).values, 16 * u.values, rtol=1e-13, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_half_derivatives_compose(seed):
    grid = sv.make_grid(2, 10.0, 32)
    u = random_field(grid, seed)
    twice = sv.fractional_derivative(sv.fractional_derivative(u, 0.5), 0.5).values
    once = sv.fractional_derivative(u, 1.0).values
    assert np.linalg.norm(twice - once) <= 1e-10 * np.linalg.norm(once)


# --- initial data ----------------------------------------------------------


def test_initial_profiles():
    grid = sv.make_grid(1, 2 * math.pi, 32)
    flat = sv.sample_initial(sv.PlaneWave((0.0,)), grid)
    assert np.all(flat.values == 1)
    with pytest.raises(ValueError, match="ring requires dim >= 2"):
        sv.sample_initial(sv.Ring(1.0, 0.3), grid)
    with pytest.raises(ValueError, match="frequency lattice"):
        sv.sample_initial(sv.PlaneWave((0.5,)), grid)
    ring = sv.sample_initial(sv.Ring(2.0, 0.3), sv.make_grid(2, 10.0, 64))
    assert ring.max_abs() == pytest.approx(1.0, abs=0.05)


# --- scaling ---------------------------------------------------------------


def test_unit_dilation_is_the_identity():
    grid = sv.make_grid(1, 40.0, 256)
    u = sv.sample_initial(sv.Gaussian(), grid)
    spec = sv.PotentialSpec(0.25, 7.0)
    assert np.allclose(sv.rescale(u, 1.0, spec).values, u.values, atol=1e-13)
    rows = sv.scaling_table(u, spec, [1.0], [0.0, 0.5, 1.0])
    assert all(r.measured == pytest.approx(1.0, rel=1e-12) for r in rows)


def test_scaling_exponent_values():
    # N = 1, b = 1/4, alpha = 7 gives s_c = 1/4
    assert sv.scaling_exponent(1, 0.25, 7.0, 0.25) == pytest.approx(0.0, abs=1e-15)
    assert 2 ** sv.scaling_exponent(1, 0.25, 7.0, 1.25) == pytest.approx(2.0)


def test_box_too_small():
    grid = sv.make_grid(1, 10.0, 128)
    u = sv.sample_initial(sv.Gaussian(1.5), grid)
    with pytest.raises(sv.SolverError, match="box too small"):
        sv.rescale(u, 0.25, sv.PotentialSpec(0.25, 3.0))


# --- Strichartz norms ------------------------------------------------------


def test_energy_pair_is_the_largest_l2_norm(line):
    traj = [(0.1 * k, sv.Field(line, (1 + 0.1 * k) * random_field(line, 9).values)) for k in range(5)]
    assert sv.strichartz_norm(traj, Pair(INF, 2)) == max(math.sqrt(sv.mass(u)) for _, u in traj)


def test_constant_trajectory(line):
    u = random_field(line, 5)
    traj = [(t, u) for t in np.linspace(0, 2.0, 9)]
    assert sv.strichartz_norm(traj, (4, 3)) == pytest.approx(2.0 ** 0.25 * sv.lr_norm(u, 3), rel=1e-12)


def test_trajectory_checks(line):
    u = random_field(line, 5)
    with pytest.raises(ValueError):
        sv.strichartz_norm([], (2, 2))
    with pytest.raises(ValueError):
        sv.strichartz_norm([(1.0, u), (0.5, u)], (2, 2))


# --- Picard iteration ------------------------------------------------------


def test_zero_data_picard(line):
    res = sv.picard_iterate(sv.Field(line, np.zeros(line.shape)), 1.0, 16, 4, sv.PotentialSpec(0.25, 3.0))
    assert res.distances == [0.0] * 4
    assert res.max_ratio == 0.0 and res.status == "contraction"


def test_picard_validates_arguments(line):
    u = sv.sample_initial(sv.Gaussian(), line)
    with pytest.raises(ValueError):
        sv.picard_iterate(u, 1.0, 4, 4, sv.PotentialSpec(0.25, 3.0))


def test_small_data_short_time_contracts():
    grid = sv.make_grid(1, 40.0, 128)
    u = sv.sample_initial(sv.Gaussian(1.0, 0.3), grid)
    res = sv.picard_iterate(u, 0.05, 32, 5, sv.PotentialSpec(0.25, 3.0, -1))
    assert res.max_ratio < 0.5
    assert res.distances[0] == max(res.distances)


def test_calibration_inverts_the_model():
    c = sv.calibrate_constant(0.6, 1.3, 0.2, 0.25, 1 / 11, 3.0)
    a = 2 * c * 1.3
    assert 2 * c * a**3 * (0.2**0.25 + 0.2 ** (1 / 11)) == pytest.approx(0.6, rel=1e-12)


# --- binary dump -----------------------------------------------------------


def test_binary_round_trip(tmp_path):
    grid = sv.make_grid(2, (8.0, 6.0), (16, 8))
    snaps = [(0.0, random_field(grid, 1)), (0.5, random_field(grid, 2))]
    path = sv.write_binary(tmp_path / "run.bin", snaps, {"note": "x"})
    back = sv.read_binary(path)
    assert [np.array_equal(a.values, b.values) for (_, a), b in zip(snaps, back)] == [True, True]
    raw = path.read_bytes()
    assert int.from_bytes(raw[:8], "little") == 2
    assert (tmp_path / "run.bin.json").exists()
