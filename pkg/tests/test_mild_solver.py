import numpy as np
import pytest
from scipy import special

from fracheat.grids import BoxGrid
from fracheat.kernels import KernelParams
from fracheat.memory import BlowupTailMemory, ExpBumpMemory, PowerRampMemory, ZeroMemory
from fracheat.mild_solver import (BLOWUP, COMPLETED, ProblemSpec, Trajectory,
                                  linear_representation, mild_march,
                                  residual_check)

P_HALF = KernelParams.create(0.5, 1)


def exp_bump_exact(grid, mem, params, t):
    """Closed-form linear solution driven by the exponential bump history."""
    z = (grid.lam + mem.rate) * t
    return grid.ifft(mem.amp * np.exp(mem.rate * t)
                     * special.gammaincc(params.sigma, z) * mem._bump_hat(grid))


def small_spec(**kw):
    defaults = dict(params=P_HALF, p=2.0, memory=ZeroMemory(),
                    grid=BoxGrid(length=16.0, n=32, dim=1), t_max=0.5,
                    dt_init=5e-3, dt_max=0.02, blowup_threshold=100.0)
    defaults.update(kw)
    return ProblemSpec(**defaults)


class TestSpecValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            small_spec(p=0.0)
        with pytest.raises(ValueError):
            small_spec(t_max=-1.0)
        with pytest.raises(ValueError):
            small_spec(reaction="quadratic")

    def test_threshold_must_exceed_initial_sup(self):
        spec = small_spec(memory=ExpBumpMemory(amp=500.0, rate=1.0, width=1.0))
        with pytest.raises(ValueError):
            spec.validate_threshold()


class TestZeroAndLinear:
    def test_zero_memory_stays_zero(self):
        traj = mild_march(small_spec())
        assert traj.status == COMPLETED
        assert np.max(traj.sup_norms) == 0.0

    def test_linear_mode_reproduces_closed_form(self):
        grid = BoxGrid(length=16.0, n=64, dim=1)
        mem = ExpBumpMemory(amp=1.0, rate=1.0, width=1.0)
        spec = small_spec(grid=grid, memory=mem, reaction="none", t_max=1.0,
                          dt_init=2e-3, dt_max=2e-3, dt_growth=1.0)
        traj = mild_march(spec)
        assert traj.status == COMPLETED
        for j in range(1, len(traj.times), 100):
            want = exp_bump_exact(grid, mem, P_HALF, traj.times[j])
            assert np.max(np.abs(traj.slices[j] - want)) < 1e-12

    def test_prescribed_forcing_matches_direct_quadrature(self):
        # marcher on a prescribed smooth reaction vs an independent dense
        # product integration of the representation formula
        grid = BoxGrid(length=16.0, n=32, dim=1)
        k = 2 * np.pi / grid.length

        def h(g, t):
            return np.exp(-t) * (1.0 + np.cos(k * g.coords()[..., 0]))

        spec = small_spec(grid=grid, t_max=0.8, dt_init=2e-3, dt_max=2e-3,
                          dt_growth=1.0)
        traj = mild_march(spec, forcing=h)
        t = float(traj.times[-1])
        want = linear_representation(grid, P_HALF, ZeroMemory(), h, t)
        err = np.max(np.abs(traj.slices[-1] - want)) / np.max(np.abs(want))
        assert err < 2e-3

    def test_refinement_cauchy_order(self):
        # halving dt (and doubling n) shrinks the change with order >= 1
        k_mode = 2 * np.pi / 16.0

        def h(g, t):
            return np.exp(-t) * (1.0 + np.cos(k_mode * g.coords()[..., 0]))

        sups = {}
        for n, dt in [(32, 8e-3), (64, 4e-3), (128, 2e-3)]:
            spec = small_spec(grid=BoxGrid(length=16.0, n=n, dim=1), t_max=0.8,
                              dt_init=dt, dt_max=dt, dt_growth=1.0)
            traj = mild_march(spec, forcing=h)
            sups[dt] = traj.sup_norms[-1]
        e1 = abs(sups[8e-3] - sups[4e-3])
        e2 = abs(sups[4e-3] - sups[2e-3])
        assert np.log2(e1 / e2) >= 1.0


class TestExplicitSolutions:
    def test_tracks_blowup_solution(self):
        grid = BoxGrid(length=1.0, n=1, dim=1)
        mem = BlowupTailMemory(sigma=0.5, p=2.0, horizon=1.0)
        spec = ProblemSpec(params=P_HALF, p=2.0, memory=mem, grid=grid,
                           t_max=2.0, dt_init=1e-4, dt_max=0.01,
                           blowup_threshold=1e5)
        traj = mild_march(spec)
        assert traj.status == BLOWUP
        assert traj.times[-1] == pytest.approx(1.0, abs=2e-2)
        z = lambda t: mem.coefficient * (1.0 - t) ** -0.5
        errs = [abs(traj.sup_norms[j] - z(traj.times[j])) / z(traj.times[j])
                for j in range(1, len(traj.times)) if traj.times[j] < 0.95]
        assert max(errs) < 1e-2

    def test_sublinear_global_tracks_ramp(self):
        grid = BoxGrid(length=1.0, n=1, dim=1)
        mem = PowerRampMemory.global_solution(sigma=0.5, p=0.8, shift=1.0)
        spec = ProblemSpec(params=P_HALF, p=0.8, memory=mem, grid=grid,
                           t_max=4.0, dt_init=1e-3, dt_max=0.02,
                           blowup_threshold=1e5)
        traj = mild_march(spec)
        assert traj.status == COMPLETED
        bound = mem.coeff * (traj.times + 1.0) ** mem.nu
        # tracks the explicit solution, hence bounded by it up to tolerance
        assert np.max(np.abs(traj.sup_norms - bound) / bound) < 5e-3
        assert np.all(traj.sup_norms <= bound * (1.0 + 5e-3))


class TestProperties:
    def test_comparison_monotonicity(self):
        grid = BoxGrid(length=24.0, n=64, dim=1)
        trajs = []
        for amp in (0.3, 0.6):
            spec = small_spec(grid=grid, t_max=1.0, dt_init=2e-3, dt_max=5e-3,
                              memory=ExpBumpMemory(amp=amp, rate=1.0, width=1.0))
            trajs.append(mild_march(spec))
        n = min(len(trajs[0].times), len(trajs[1].times))
        tol = 1e-10
        assert np.all(trajs[0].slices[:n] <= trajs[1].slices[:n] + tol)

    def test_positivity(self):
        grid = BoxGrid(length=24.0, n=64, dim=1)
        spec = small_spec(grid=grid, t_max=1.0, dt_init=2e-3, dt_max=5e-3,
                          memory=ExpBumpMemory(amp=0.5, rate=1.0, width=1.0))
        traj = mild_march(spec)
        assert traj.status == COMPLETED
        assert np.min(traj.slices) >= -1e-10

    def test_coarsening_accuracy(self):
        # panel merging against an uncoarsened short run: error small at the
        # default age and decreasing as merging is delayed
        grid = BoxGrid(length=24.0, n=32, dim=1)
        mem = ExpBumpMemory(amp=0.5, rate=1.0, width=1.0)

        def run(age):
            return mild_march(small_spec(grid=grid, memory=mem, t_max=1.0,
                                         dt_init=2e-3, dt_max=2e-3,
                                         dt_growth=1.0, coarsen_age=age))

        ref = run(0.0)
        errs = {}
        for age in (8.0, 16.0, 32.0):
            co = run(age)
            errs[age] = (np.max(np.abs(ref.slices[-1] - co.slices[-1]))
                         / np.max(ref.slices[-1]))
        assert errs[16.0] < 5e-3
        assert errs[32.0] < errs[8.0]

    def test_trajectory_invariants(self):
        grid = BoxGrid(length=24.0, n=32, dim=1)
        spec = small_spec(grid=grid, t_max=0.5,
                          memory=ExpBumpMemory(amp=0.5, rate=1.0, width=1.0))
        traj = mild_march(spec)
        assert np.all(np.diff(traj.times) > 0)
        for j in (0, len(traj.times) // 2, -1):
            assert traj.sup_norms[j] == pytest.approx(np.max(np.abs(traj.slices[j])))


class TestResidual:
    def test_zero_trajectory(self):
        traj = mild_march(small_spec())
        rep = residual_check(traj, small_spec(), n_samples=4, seed=0)
        assert rep["max_rel_residual"] == 0.0

    def test_desk_scale_run(self):
        grid = BoxGrid(length=24.0, n=128, dim=1)
        spec = small_spec(grid=grid, t_max=1.0, dt_init=2e-3, dt_max=2e-3,
                          dt_growth=1.0,
                          memory=ExpBumpMemory(amp=0.5, rate=1.0, width=1.0))
        traj = mild_march(spec)
        rep = residual_check(traj, spec, n_samples=12, seed=1)
        assert rep["max_rel_residual"] < 2e-2

    def test_residual_refines_on_explicit_run(self):
        grid = BoxGrid(length=1.0, n=1, dim=1)
        mem = BlowupTailMemory(sigma=0.5, p=2.0, horizon=1.0)
        res = []
        for dt in (8e-3, 2e-3):
            spec = ProblemSpec(params=P_HALF, p=2.0, memory=mem, grid=grid,
                               t_max=0.5, dt_init=dt, dt_max=dt, dt_growth=1.0,
                               blowup_threshold=1e5)
            traj = mild_march(spec)
            rep = residual_check(traj, spec, n_samples=8, seed=2)
            res.append(rep["max_rel_residual"])
        assert res[1] < res[0]
