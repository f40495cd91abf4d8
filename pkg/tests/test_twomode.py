import numpy as np
import pytest
from pydantic import ValidationError

from nlstools.core.config import Symmetry
from nlstools.core.exceptions import FixedPointError, SingularityError
from nlstools.core.kernel import KernelFamily
from nlstools.spectrum.overlaps import N_ETA, OverlapSet, Regime
from nlstools.twomode.curves import branch_curves, coalescence_discriminant, critical_norm_curve, existence_intervals
from nlstools.twomode.orbit import (
    hamiltonian_mesh,
    integrate_orbit,
    phase_portrait,
    portrait_initial_states,
    second_order_residual,
)
from nlstools.twomode.params import FixedPoint, ModeParams, StabilityType, TwoModeState, mode_params
from nlstools.twomode.system import (
    asymmetric_mu,
    asymmetric_norm_polynomial,
    asymmetric_z,
    bifurcation_mu,
    branch_mu,
    critical_norms,
    existence_bound,
    fixed_point_stability,
    fixed_points,
    hamiltonian,
    lambda_sq_at,
    position_momentum_rhs,
    projected_residual,
    reduced_rhs,
    stationary_amplitudes,
)


@pytest.fixture
def params():
    """Defocusing cubic, focusing quintic coefficients of the size met at sigma ~ 1"""
    return ModeParams(s=1, delta=-1, eta=0.16, eta4=0.03, omega=0.01, Omega=0.14)


def test_mode_params_validation():
    with pytest.raises(ValidationError):
        ModeParams(s=2, delta=-1, eta=0.1, eta4=0.0, omega=0.01, Omega=0.1)
    with pytest.raises(ValidationError):
        ModeParams(s=1, delta=-1, eta=0.1, eta4=0.0, omega=0.0, Omega=0.1)
    with pytest.raises(ValidationError):
        ModeParams(s=1, delta=-1, eta=0.1, eta4=0.0, omega=0.01, Omega=0.1, N=-1.0)
    p = ModeParams(s=1, delta=-1, eta=0.1, eta4=0.0, omega=0.01, Omega=0.1)
    assert p.eta0 == 0.1
    assert p.omega0 == pytest.approx(0.09)
    assert p.omega1 == pytest.approx(0.11)
    with pytest.raises(ValueError):
        p.nonlinearity()


def test_mode_params_per_regime(small_basis):
    eta = 0.01 * np.arange(1, N_ETA + 1)
    overlaps = OverlapSet(eta=eta, sigma=1.0, kernel_family=KernelFamily.gaussian)

    case1 = mode_params(small_basis, overlaps, 1, -1)
    assert case1.regime == Regime.case1
    assert case1.eta == pytest.approx(eta[0])
    assert case1.eta4 == pytest.approx(eta[4])
    assert case1.omega == pytest.approx(small_basis.omega)

    case2 = mode_params(small_basis, overlaps, 1, -1, regime=Regime.case2)
    assert case2.eta == pytest.approx(eta[0] - eta[1])
    assert case2.eta0 == pytest.approx(eta[0])
    assert case2.eta_a == pytest.approx(eta[0] + eta[1])

    case3 = mode_params(small_basis, overlaps, 1, -1, regime=Regime.case3)
    assert case3.eta4 == 0.0


def test_critical_norms_solve_f_equal_two_omega(params):
    norms = critical_norms(params)
    w = params.omega
    assert norms.N0cr is None
    assert params.nonlinearity(norms.N1cr) == pytest.approx(-2.0 * w, abs=1e-12)
    assert params.nonlinearity(norms.N2cr) == pytest.approx(2.0 * w, abs=1e-12)
    assert params.nonlinearity(norms.N3cr) == pytest.approx(2.0 * w, abs=1e-12)
    assert 0 < norms.N2cr < norms.N3cr < norms.N1cr
    assert norms.present() == [norms.N1cr, norms.N2cr, norms.N3cr]


def test_critical_norms_without_quintic_term():
    p = ModeParams(s=1, delta=-1, eta=0.2, eta4=0.0, omega=0.01, Omega=0.14, regime=Regime.case3)
    norms = critical_norms(p)
    assert norms.N2cr == pytest.approx(0.1)
    assert norms.N0cr is None
    assert norms.N3cr is None


def test_pitchforks_join_the_asymmetric_family(params):
    norms = critical_norms(params)
    for name, family in (("N2cr", Symmetry.antisymmetric), ("N3cr", Symmetry.antisymmetric), ("N1cr", Symmetry.symmetric)):
        N = getattr(norms, name)
        assert asymmetric_mu(N, params) == pytest.approx(branch_mu(N, params, family), abs=1e-10)

    curves = branch_curves(params, [norms.N2cr, norms.N3cr])
    assert np.all(np.abs(curves["lambda_sq_antisymmetric"]) <= 1e-12)
    assert np.all(curves["z_asymmetric"] <= 1e-5)


def test_fixed_point_census(params):
    p = params.with_norm(2.0)
    census = {fp.family: fp for fp in fixed_points(p) if fp.state.z >= 0}
    assert census[Symmetry.symmetric].stability == StabilityType.center
    assert census[Symmetry.antisymmetric].stability == StabilityType.saddle
    assert census[Symmetry.asymmetric].stability == StabilityType.center
    assert len(fixed_points(p)) == 4

    f, w = p.nonlinearity(), p.omega
    curves = branch_curves(params, [2.0])
    assert census[Symmetry.antisymmetric].lambda_sq == pytest.approx(2.0 * w * (f - 2.0 * w))
    assert census[Symmetry.asymmetric].lambda_sq == pytest.approx(curves["lambda_sq_asymmetric"][0])
    assert census[Symmetry.asymmetric].state.z == pytest.approx(curves["z_asymmetric"][0])
    assert census[Symmetry.asymmetric].state.theta == pytest.approx(np.pi)

    for fp in fixed_points(p):
        assert np.max(np.abs(reduced_rhs(fp.state, p))) <= 1e-10


def test_no_asymmetric_points_below_the_first_pitchfork(params):
    p = params.with_norm(0.5 * critical_norms(params).N2cr)
    assert asymmetric_z(p) == []
    assert [fp.family for fp in fixed_points(p)] == [Symmetry.symmetric, Symmetry.antisymmetric]
    assert np.isnan(asymmetric_mu(p.N, p))


def test_focusing_asymmetric_points_sit_at_zero_phase():
    p = ModeParams(s=-1, delta=1, eta=0.16, eta4=0.03, omega=0.01, Omega=0.14, N=1.0)
    states = asymmetric_z(p)
    assert states and all(state.theta == 0.0 for state in states)
    assert lambda_sq_at(states[0], p) < 0


def test_fixed_point_stability_rejects_non_fixed_points(params):
    fp = FixedPoint(state=TwoModeState(z=0.3, theta=np.pi), family=Symmetry.asymmetric)
    with pytest.raises(FixedPointError):
        fixed_point_stability(fp, params.with_norm(2.0))
    with pytest.raises(ValidationError):
        FixedPoint(state=TwoModeState(z=0.0, theta=0.0), family=Symmetry.antisymmetric)


def test_reduced_system_is_singular_at_full_imbalance(params):
    p = params.with_norm(2.0)
    with pytest.raises(SingularityError) as e:
        reduced_rhs(TwoModeState(z=1.0, theta=0.0), p)
    assert e.value.z == 1.0
    with pytest.raises(SingularityError):
        integrate_orbit(TwoModeState(z=-1.0, theta=0.5), p, t_end=1.0, dt=0.1)
    with pytest.raises(ValidationError):
        TwoModeState(z=1.5, theta=0.0)


def test_hamiltonian_gradient_drives_the_flow(params, faker):
    p = params.with_norm(2.0)
    state = TwoModeState(z=faker.pyfloat(min_value=-0.9, max_value=0.9), theta=faker.pyfloat(min_value=0.0, max_value=6.0))
    eps = 1e-6
    dH_dz = (
        hamiltonian(TwoModeState(z=state.z + eps, theta=state.theta), p)
        - hamiltonian(TwoModeState(z=state.z - eps, theta=state.theta), p)
    ) / (2 * eps)
    dH_dtheta = (
        hamiltonian(TwoModeState(z=state.z, theta=state.theta + eps), p)
        - hamiltonian(TwoModeState(z=state.z, theta=state.theta - eps), p)
    ) / (2 * eps)
    zdot, thetadot = reduced_rhs(state, p)
    assert zdot == pytest.approx(-dH_dtheta, abs=1e-7)
    assert thetadot == pytest.approx(dH_dz, abs=1e-7)


def test_orbit_conserves_the_hamiltonian(params):
    p = params.with_norm(2.0)
    orbit = integrate_orbit(TwoModeState(z=0.4, theta=0.0), p, t_end=200.0, dt=0.5)
    assert orbit.max_drift <= 1e-8
    assert orbit.t[-1] == pytest.approx(200.0)
    assert np.all(np.abs(orbit.z) < 1.0)
    frame = orbit.dataframe()
    assert list(frame.columns) == ["t", "z", "theta", "p", "H"]


@pytest.mark.parametrize("theta", [0.3, 2.0, 3.5, 5.5])
def test_position_momentum_form(params, faker, theta):
    p = params.with_norm(3.0)
    z = faker.pyfloat(min_value=-0.9, max_value=0.9)
    zdot, thetadot = reduced_rhs(TwoModeState(z=z, theta=theta), p)
    root = np.sqrt(1.0 - z**2)
    accel = 2.0 * p.omega * (-z * zdot / root * np.sin(theta) + root * np.cos(theta) * thetadot)

    pz, pdot = position_momentum_rhs(z, zdot, p, branch=int(np.sign(np.cos(theta))))
    assert pz == zdot
    assert pdot == pytest.approx(accel, rel=1e-9, abs=1e-15)


def test_orbit_satisfies_the_second_order_form(params):
    p = params.with_norm(2.0)
    orbit = integrate_orbit(TwoModeState(z=0.4, theta=0.3), p, t_end=100.0, dt=0.5)
    assert second_order_residual(orbit, p) <= 1e-10


def test_self_trapped_orbit_keeps_its_sign(params):
    p = params.with_norm(2.0)
    z_star = asymmetric_z(p)[0].z
    orbit = integrate_orbit(TwoModeState(z=z_star - 0.01, theta=np.pi), p, t_end=100.0, dt=0.5)
    assert np.all(orbit.z > 0)


def test_phase_portrait_skips_singular_seeds(params):
    p = params.with_norm(2.0)
    seeds = portrait_initial_states(4, z_max=0.9)
    assert len(seeds) == 4
    frame = phase_portrait(p, seeds + [TwoModeState(z=1.0, theta=0.0)], t_end=20.0, dt=1.0)
    assert sorted(frame["orbit"].unique()) == [0, 1, 2, 3]


def test_hamiltonian_mesh_shape(params):
    mesh = hamiltonian_mesh(params.with_norm(1.0), n_z=11, n_theta=7)
    assert len(mesh) == 77
    assert mesh["z"].min() == -1.0 and mesh["z"].max() == 1.0


def test_bifurcation_mu_uses_the_parent_branch(params):
    out = bifurcation_mu(params)
    assert set(out) == {"N1cr", "N2cr", "N3cr"}
    N, mu = out["N2cr"]
    assert mu == pytest.approx(params.omega1 + params.eta * N / 2 - params.eta4 * N**2 / 4)
    N, mu = out["N1cr"]
    assert mu == pytest.approx(branch_mu(N, params, Symmetry.symmetric))


def test_existence_bound(params):
    bound = existence_bound(params, Symmetry.antisymmetric)
    norms = np.linspace(0.01, 12.0, 2000)
    assert np.max(branch_mu(norms, params, Symmetry.antisymmetric)) <= bound + 1e-12
    assert existence_bound(params.copy(update={"eta4": 0.0}), Symmetry.symmetric) is None


def test_stationary_amplitudes_solve_the_projected_equations(params):
    N = 1.0
    mu = branch_mu(N, params, Symmetry.antisymmetric)
    p = params.with_mu(mu)
    amplitudes = stationary_amplitudes(p, Symmetry.antisymmetric)
    assert any(rho_sq == pytest.approx(N / 2) for rho_sq, _ in amplitudes)

    c = np.sqrt(N / 2)
    left, right = projected_residual(c, -c, p)
    assert abs(left) <= 1e-14 and abs(right) <= 1e-14
    with pytest.raises(ValueError):
        stationary_amplitudes(params, Symmetry.symmetric)
    with pytest.raises(ValueError):
        stationary_amplitudes(p, Symmetry.asymmetric)


def test_asymmetric_norm_polynomial_recovers_the_norm(params):
    N = 2.0
    report = asymmetric_norm_polynomial(params.with_mu(asymmetric_mu(N, params)))
    assert len(report.coefficients) == 5
    assert any(abs(root - N) <= 1e-6 for root in report.accepted)
    assert report.mismatched_powers == []
    assert report.discarded == len(report.real_roots) - len(report.accepted)


def test_printed_quartic_mismatch_is_reported():
    p = ModeParams(
        s=1, delta=-1, eta=0.16, eta0=0.2, eta1=0.04, eta4=0.03, omega=0.01, Omega=0.14, regime=Regime.case2, mu=0.3
    )
    report = asymmetric_norm_polynomial(p)
    assert report.mismatched_powers == [3, 2, 1]
    assert report.printed[0] == pytest.approx(report.coefficients[0])
    assert report.printed[-1] == pytest.approx(report.coefficients[-1])

    case3 = asymmetric_norm_polynomial(p.copy(update={"regime": Regime.case3}))
    assert case3.printed is None


def test_coalescence_discriminant_controls_the_pair(params):
    assert coalescence_discriminant(params) > 0
    assert critical_norms(params).N3cr is not None

    weak = params.copy(update={"eta": 0.03})
    assert coalescence_discriminant(weak) < 0
    norms = critical_norms(weak)
    assert norms.N2cr is None and norms.N3cr is None


def test_critical_norm_curve(small_basis):
    frame = critical_norm_curve(small_basis, KernelFamily.gaussian, [0.5, 1.0], 1, -1)
    assert list(frame["sigma"]) == [0.5, 1.0]
    assert {"N0cr", "N1cr", "N2cr", "N3cr", "mu_N2cr"} <= set(frame.columns)
    assert frame["N2cr"].notna().all()


def test_existence_intervals_end_at_the_critical_norms(params):
    norms = critical_norms(params)
    intervals = existence_intervals(params, np.linspace(1e-3, 8.0, 400))
    assert len(intervals) == 2
    assert intervals[0] == pytest.approx((norms.N2cr, norms.N3cr), abs=1e-8)
    assert intervals[1][0] == pytest.approx(norms.N1cr, abs=1e-8)
    assert intervals[1][1] == 8.0

    assert existence_intervals(params, np.linspace(1.0, 5.3, 50)) == [(1.0, pytest.approx(norms.N3cr, abs=1e-8))]
    assert existence_intervals(params, [0.01, 0.05]) == []
    with pytest.raises(ValueError):
        existence_intervals(params, [1.0])
