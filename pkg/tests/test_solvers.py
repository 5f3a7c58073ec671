import numpy as np
import pytest
from dataclasses import replace

from cmdopt.errors import ConfigError, ContractViolation, StepError
from cmdopt.games import (
    POSITIVE,
    Block,
    TwoPlayerGame,
    lagrangian_transform,
    make_bilinear_positive,
    make_constrained_qp,
    make_empty_threats,
    make_quadratic_game,
    make_robust_regression,
)
from cmdopt.potentials import BurgEntropy, QuadraticPotential, ShannonEntropy, make_potential
from cmdopt.solvers import (
    IterateState,
    SolverConfig,
    alternating_best_response,
    cmd_step,
    cmw_step,
    default_potential,
    initial_state,
    md_step,
    mirror_descent_step,
    pcgd_step,
    px_step,
    pxm_step,
    retract,
    run_solver,
    solve_local_game,
)
from cmdopt.trace import _fmt


def xy_game():
    return TwoPlayerGame(1, 1, lambda x, y: float(x[0] * y[0]), lambda x, y: -float(x[0] * y[0]),
                         lambda x, y: y.copy(), lambda x, y: -x.copy(), lambda x, y, v: np.asarray(v, float),
                         lambda x, y, v: -np.asarray(v, float), zero_sum=True, name="xy")


def dense_cross(game, x, y):
    Dxy = np.column_stack([game.hvp_xy_f(x, y, e) for e in np.eye(game.dim_y)])
    Dyx = np.column_stack([game.hvp_yx_g(x, y, e) for e in np.eye(game.dim_x)])
    return Dxy, Dyx


def positive_game(m, n, seed, scale=1.0, zero_sum=True):
    """Random quadratic game restricted to the positive orthant for both players."""
    base = make_quadratic_game(m, n, seed=seed, zero_sum=zero_sum)
    wrap = lambda h: (lambda x, y, *a: scale * np.asarray(h(x, y, *a)))
    return TwoPlayerGame(m, n, lambda x, y: scale * base.eval_f(x, y), lambda x, y: scale * base.eval_g(x, y),
                         wrap(base.grad_x_f), wrap(base.grad_y_g), wrap(base.hvp_xy_f), wrap(base.hvp_yx_g),
                         zero_sum=zero_sum, x_layout=(Block("x", m, POSITIVE),),
                         y_layout=(Block("y", n, POSITIVE),))


class TestLocalGame:
    def test_zero_gradients(self):
        game = make_bilinear_positive(2.0)
        z = np.array([0.1])
        sol = solve_local_game(game, z, z, ShannonEntropy(1), ShannonEntropy(1), 1.0, 1.0)
        np.testing.assert_array_equal(sol.delta_x, [0.0])
        np.testing.assert_array_equal(sol.delta_y, [0.0])

    def test_scalar_xy(self):
        q = QuadraticPotential(1)
        sol = solve_local_game(xy_game(), [1.0], [1.0], q, q, 1.0, 1.0)
        np.testing.assert_allclose(sol.delta_x, [-1.0], rtol=1e-12)
        np.testing.assert_allclose(sol.delta_y, [0.0], atol=1e-12)

    @pytest.mark.parametrize("zero_sum", [True, False])
    def test_matches_dense_direct_solve(self, zero_sum):
        rng = np.random.default_rng(0)
        for seed in range(10):
            game = positive_game(3, 2, seed, zero_sum=zero_sum)
            x, y = rng.uniform(0.2, 2, size=3), rng.uniform(0.2, 2, size=2)
            a, b = rng.uniform(0.5, 3, size=2)
            psi, phi = ShannonEntropy(3), make_potential("burg", 2)
            sol = solve_local_game(game, x, y, psi, phi, a, b, tol=1e-13)
            Dxy, Dyx = dense_cross(game, x, y)
            K = np.block([[a * np.diag(1 / x), Dxy], [Dyx, b * np.diag(1 / y**2)]])
            rhs = -np.concatenate([game.grad_x_f(x, y), game.grad_y_g(x, y)])
            direct = np.linalg.solve(K, rhs)
            np.testing.assert_allclose(np.concatenate([sol.delta_x, sol.delta_y]), direct,
                                       rtol=1e-8, atol=1e-10)

    def test_first_order_conditions(self):
        rng = np.random.default_rng(1)
        tol = 1e-9
        for seed in range(10):
            game = positive_game(4, 3, seed)
            x, y = rng.uniform(0.1, 3, size=4), rng.uniform(0.1, 3, size=3)
            psi, phi = ShannonEntropy(4), ShannonEntropy(3)
            sol = solve_local_game(game, x, y, psi, phi, 2.0, 0.5, tol=tol)
            gx, gy = game.grad_x_f(x, y), game.grad_y_g(x, y)
            rx = 2.0 * psi.hessian_vec(x, sol.delta_x) + game.hvp_xy_f(x, y, sol.delta_y) + gx
            ry = 0.5 * phi.hessian_vec(y, sol.delta_y) + game.hvp_yx_g(x, y, sol.delta_x) + gy
            # measured in the metric-scaled coordinates the solver works in
            assert np.linalg.norm(psi.hessian_inv_sqrt(x, rx)) / np.sqrt(2.0) <= 10 * tol * max(
                1.0, np.linalg.norm(psi.hessian_inv_sqrt(x, gx)))
            assert np.linalg.norm(phi.hessian_inv_sqrt(y, ry)) / np.sqrt(0.5) <= 10 * tol * max(
                1.0, np.linalg.norm(phi.hessian_inv_sqrt(y, gy)))

    def test_reports_and_counts(self):
        game = positive_game(3, 2, 4)
        sol = solve_local_game(game, np.ones(3), np.ones(2), ShannonEntropy(3), ShannonEntropy(2), 1.0, 1.0)
        assert sol.grad_calls == 2
        assert sol.hvp_calls == 2 + 2 * sol.krylov_matvecs
        assert all(r <= 1e-8 * 10 for r in sol.residuals)

    def test_non_convergence_raises_step_error(self):
        game = positive_game(6, 5, 5)
        with pytest.raises(StepError) as info:
            solve_local_game(game, np.ones(6), np.ones(5), ShannonEntropy(6), ShannonEntropy(5), 0.01, 0.01,
                             tol=1e-14, max_iter=1)
        assert info.value.report is not None and not info.value.report.converged

    def test_domain_error_outside(self):
        from cmdopt.errors import DomainError
        with pytest.raises(DomainError):
            solve_local_game(make_empty_threats(), [0.0], [1.0], ShannonEntropy(1), ShannonEntropy(1), 1, 1)


class TestAlternating:
    def test_zero_coupling_is_mirror_descent(self):
        game = TwoPlayerGame(1, 2, lambda x, y: 0.0, lambda x, y: float(y @ y), lambda x, y: np.ones(1),
                             lambda x, y: 2 * y, lambda x, y, v: np.zeros(1), lambda x, y, v: np.zeros(2),
                             y_layout=(Block("y", 2, POSITIVE),))
        y = np.array([0.5, 2.0])
        phi = ShannonEntropy(2)
        dy = alternating_best_response(game, np.ones(1), y, np.array([0.3]), "x", QuadraticPotential(1), phi,
                                       1.0, 3.0)
        np.testing.assert_allclose(dy, -phi.hessian_solve(y, 2 * y) / 3.0)

    def test_scalar_xy_matches_joint_solve(self):
        q = QuadraticPotential(1)
        dy = alternating_best_response(xy_game(), [1.0], [1.0], np.array([-1.0]), "x", q, q, 1.0, 1.0)
        np.testing.assert_allclose(dy, [0.0], atol=1e-15)

    def test_partner_optimality(self):
        rng = np.random.default_rng(2)
        for seed in range(20):
            game = positive_game(3, 4, seed, zero_sum=bool(seed % 2))
            x, y = rng.uniform(0.1, 2, size=3), rng.uniform(0.1, 2, size=4)
            psi, phi = ShannonEntropy(3), ShannonEntropy(4)
            a, b = rng.uniform(0.5, 2, size=2)
            sol = solve_local_game(game, x, y, psi, phi, a, b, solve_for="x")
            dy = alternating_best_response(game, x, y, sol.delta_x, "x", psi, phi, a, b)
            np.testing.assert_array_equal(dy, sol.delta_y)
            ry = b * phi.hessian_vec(y, dy) + game.hvp_yx_g(x, y, sol.delta_x) + game.grad_y_g(x, y)
            assert np.linalg.norm(ry) <= 1e-10 * max(1.0, np.linalg.norm(game.grad_y_g(x, y)))
            sol = solve_local_game(game, x, y, psi, phi, a, b, solve_for="y")
            dx = alternating_best_response(game, x, y, sol.delta_y, "y", psi, phi, a, b)
            rx = a * psi.hessian_vec(x, dx) + game.hvp_xy_f(x, y, sol.delta_y) + game.grad_x_f(x, y)
            assert np.linalg.norm(rx) <= 1e-10 * max(1.0, np.linalg.norm(game.grad_x_f(x, y)))

    def test_bad_player(self):
        q = QuadraticPotential(1)
        with pytest.raises(ContractViolation):
            alternating_best_response(xy_game(), [1.0], [1.0], np.zeros(1), "z", q, q, 1, 1)

    def test_alternating_run_converges(self):
        game = make_empty_threats()
        config = SolverConfig(method="CMW", alpha=4, beta=4, alternating=True, max_iters=400)
        trace = run_solver(game, [1.0], [1.0], config)
        assert trace.x[0] < 1e-2 and abs(trace.y[0] - 1) < 1e-2


class TestRetractionAndMirrorDescent:
    def test_retract(self):
        p = np.array([0.3, -2.0])
        d = np.array([1.0, 0.5])
        np.testing.assert_allclose(retract(QuadraticPotential(2), p, d), p + d)
        np.testing.assert_allclose(retract(ShannonEntropy(1), [1.0], [-1.0]), [np.exp(-1)], rtol=1e-15)
        assert retract(ShannonEntropy(1), [1.0], [-1.0])[0] == pytest.approx(0.367879, abs=1e-6)
        q = np.array([0.7, 1.3])
        np.testing.assert_array_equal(retract(ShannonEntropy(2), q, np.zeros(2)), q)

    def test_retract_scaling_invariance(self):
        # alpha scales the metric and the mirror map together, so it cancels in the retraction
        rng = np.random.default_rng(3)
        for kind in ("quadratic", "shannon", "burg"):
            psi = make_potential(kind, 3)
            for c in (0.1, 2.0, 50.0):
                p = np.exp(rng.uniform(-1, 1, size=3))
                d = 0.5 * p * rng.uniform(-1, 0.9, size=3)
                np.testing.assert_allclose(retract(psi.scaled(c), p, d), retract(psi, p, d), rtol=1e-12)

    def test_mirror_descent_step(self):
        p = np.array([0.4, 2.0])
        for psi in (ShannonEntropy(2), BurgEntropy(2), QuadraticPotential(2)):
            np.testing.assert_allclose(mirror_descent_step(psi, p, np.zeros(2), 1.0), p, rtol=1e-15)
        np.testing.assert_allclose(mirror_descent_step(ShannonEntropy(2), [1.0, 1.0], [1.0, -1.0], 1.0),
                                   [np.exp(-1), np.e], rtol=1e-15)
        np.testing.assert_allclose(mirror_descent_step(QuadraticPotential(2), p, [1.0, -2.0], 4.0),
                                   p - np.array([1.0, -2.0]) / 4)


class TestCMD:
    def test_cgd_example(self):
        game = xy_game()
        config = SolverConfig(method="CMD", alpha=1.0, beta=1.0)
        s = cmd_step(game, initial_state(game, [1.0], [1.0], config), config)
        np.testing.assert_allclose(s.x, [0.0], atol=1e-15)
        np.testing.assert_allclose(s.y, [1.0], rtol=1e-15)

    @pytest.mark.parametrize("zero_sum", [True, False])
    def test_cgd_closed_form(self, zero_sum):
        rng = np.random.default_rng(4)
        for trial in range(50):
            m, n = rng.integers(1, 6, size=2)
            game = make_quadratic_game(int(m), int(n), seed=trial, zero_sum=zero_sum)
            eta = rng.uniform(0.05, 0.5)
            config = SolverConfig(method="CMD", alpha=1 / eta, beta=1 / eta, krylov_tol=1e-14)
            x, y = rng.normal(size=m), rng.normal(size=n)
            s = cmd_step(game, initial_state(game, x, y, config), config)
            Dxy, Dyx = dense_cross(game, x, y)
            gx, gy = game.grad_x_f(x, y), game.grad_y_g(x, y)
            dx = -eta * np.linalg.solve(np.eye(m) - eta**2 * Dxy @ Dyx, gx - eta * Dxy @ gy)
            dy = -eta * np.linalg.solve(np.eye(n) - eta**2 * Dyx @ Dxy, gy - eta * Dyx @ gx)
            np.testing.assert_allclose(s.x, x + dx, rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(s.y, y + dy, rtol=1e-10, atol=1e-10)

    def test_fixed_points(self):
        game = make_bilinear_positive(3.0)
        z = np.array([0.1])
        for method in ("CMD", "CMW", "PX", "PXM", "MD", "PCGD"):
            config = SolverConfig(method=method, alpha=2.0, beta=2.0)
            state = initial_state(game, z, z, config)
            from cmdopt.solvers import make_step
            new = make_step(game, config)(state)
            np.testing.assert_allclose(new.x, z, rtol=1e-12)
            np.testing.assert_allclose(new.y, z, rtol=1e-12)

    def test_shannon_keeps_interior(self):
        game = make_empty_threats()
        config = SolverConfig(method="CMD", alpha=1.0, beta=1.0)
        s = initial_state(game, [0.3], [0.2], config)
        for _ in range(20):
            s = cmd_step(game, s, config)
            assert s.x[0] > 0 and s.y[0] > 0

    def test_dual_coordinates_synced(self):
        game = make_empty_threats()
        config = SolverConfig(method="CMD", alpha=4.0, beta=4.0)
        psi = ShannonEntropy(1)
        s = initial_state(game, [1.0], [1.0], config)
        for _ in range(10):
            s = cmd_step(game, s, config)
            np.testing.assert_allclose(s.dual_x, psi.gradient(s.x), rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(s.dual_y, psi.gradient(s.y), rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("problem", ["empty_threats", "regression"])
    def test_dual_coordinate_path(self, problem):
        if problem == "empty_threats":
            game, x0, y0, a, b = make_empty_threats(), [1.0], [1.0], 4.0, 4.0
        else:
            game, _ = lagrangian_transform(make_robust_regression(5, 12, 3)[0])
            x0, y0, a, b = np.full(12, 1 / 12), [0.0], 50.0, 20.0
        primal = SolverConfig(method="CMD", alpha=a, beta=b, krylov_tol=1e-13)
        dual = replace(primal, dual_coordinates=True)
        sp, sd = initial_state(game, x0, y0, primal), initial_state(game, x0, y0, dual)
        psi = default_potential(game.x_layout)
        for _ in range(100):
            sp, sd = cmd_step(game, sp, primal), cmd_step(game, sd, dual)
            np.testing.assert_allclose(sd.x, sp.x, rtol=1e-8, atol=1e-12)
            np.testing.assert_allclose(sd.y, sp.y, rtol=1e-8, atol=1e-12)
            np.testing.assert_allclose(psi.grad_inverse(sd.dual_x), sd.x, rtol=1e-12)


class TestCMW:
    def test_agrees_bitwise_with_cmd_shannon(self):
        game = make_empty_threats()
        rng = np.random.default_rng(5)
        for _ in range(10):
            x0, y0 = rng.uniform(0.05, 3, size=1), rng.uniform(0.05, 3, size=1)
            a, b = rng.uniform(0.5, 5, size=2)
            cw = SolverConfig(method="CMW", alpha=a, beta=b)
            cd = SolverConfig(method="CMD", alpha=a, beta=b, potential_x=ShannonEntropy(1),
                              potential_y=ShannonEntropy(1))
            sw, sd = initial_state(game, x0, y0, cw), initial_state(game, x0, y0, cd)
            for _ in range(10):
                sw, sd = cmw_step(game, sw, cw), cmd_step(game, sd, cd)
                np.testing.assert_array_equal(sw.x, sd.x)
                np.testing.assert_array_equal(sw.y, sd.y)

    def test_agrees_with_cmd_on_mixed_layout(self):
        game, _ = lagrangian_transform(make_robust_regression(4, 6, 0)[0])
        cw = SolverConfig(method="CMW", alpha=30.0, beta=10.0, krylov_tol=1e-13)
        cd = replace(cw, method="CMD")
        sw = initial_state(game, np.full(6, 1 / 6), [0.0], cw)
        sd = initial_state(game, np.full(6, 1 / 6), [0.0], cd)
        for _ in range(30):
            sw, sd = cmw_step(game, sw, cw), cmd_step(game, sd, cd)
        np.testing.assert_allclose(sw.x, sd.x, rtol=1e-10)
        np.testing.assert_allclose(sw.y, sd.y, rtol=1e-10, atol=1e-14)

    def test_empty_threats_from_ones(self):
        game = make_empty_threats()
        config = SolverConfig(method="CMW", alpha=4.0, beta=4.0)
        s = initial_state(game, [1.0], [1.0], config)
        for _ in range(8):
            new = cmw_step(game, s, config)
            assert new.x[0] > 0 and new.y[0] > 0
            assert new.x[0] < s.x[0]
            s = new

    def test_requires_positive_domains(self):
        game = make_quadratic_game(2, 2)
        config = SolverConfig(method="CMW")
        s = initial_state(game, np.ones(2), np.ones(2), config)
        s2 = cmw_step(game, s, config)  # free blocks use the Euclidean metric
        assert np.all(np.isfinite(s2.x))


class TestFeasibility:
    def test_random_steps_stay_positive(self):
        rng = np.random.default_rng(6)
        steps = {"CMD": cmd_step, "CMW": cmw_step, "PXM": pxm_step, "MD": md_step}
        games = [positive_game(3, 2, seed, scale=10 ** rng.uniform(-1, 2.5), zero_sum=bool(seed % 2))
                 for seed in range(40)]
        total = 0
        while total < 10_000:
            game = games[rng.integers(len(games))]
            x, y = np.exp(rng.uniform(-5, 2, size=3)), np.exp(rng.uniform(-5, 2, size=2))
            g = np.concatenate([game.grad_x_f(x, y), game.grad_y_g(x, y)])
            if np.linalg.norm(g) > 1e3:
                continue
            for name, step in steps.items():
                config = SolverConfig(method=name, alpha=10 ** rng.uniform(-2, 1),
                                      beta=10 ** rng.uniform(-2, 1), krylov_max_iter=500)
                try:
                    s = step(game, initial_state(game, x, y, config), config)
                except StepError:
                    continue
                total += 1
                assert np.all(s.x > 0) and np.all(s.y > 0), name


class TestPCGD:
    def test_spurious_fixed_point(self):
        game = make_empty_threats()
        s = IterateState(np.array([0.0]), np.array([2 / 3]))
        new = pcgd_step(game, s, 0.25)
        np.testing.assert_allclose(new.x, [0.0], atol=1e-12)
        np.testing.assert_allclose(new.y, [2 / 3], atol=1e-12)

    def test_leaves_true_nash(self):
        game = make_empty_threats()
        new = pcgd_step(game, IterateState(np.array([0.0]), np.array([1.0])), 0.25)
        np.testing.assert_allclose(new.x, [0.0], atol=1e-12)
        np.testing.assert_allclose(new.y, [0.8], rtol=1e-12)

    def test_interior_equals_cgd(self):
        game = make_empty_threats()
        x, y = np.array([3.0]), np.array([2.0])
        p = pcgd_step(game, IterateState(x, y), 0.1)
        free = TwoPlayerGame(1, 1, game.eval_f, game.eval_g, game.grad_x_f, game.grad_y_g, game.hvp_xy_f,
                             game.hvp_yx_g, zero_sum=True)
        config = SolverConfig(method="CMD", alpha=10.0, beta=10.0)
        c = cmd_step(free, initial_state(free, x, y, config), config)
        np.testing.assert_allclose(p.x, c.x, rtol=1e-12)
        np.testing.assert_allclose(p.y, c.y, rtol=1e-12)

    def test_alpha_must_equal_beta(self):
        with pytest.raises(ConfigError):
            run_solver(make_empty_threats(), [1.0], [1.0], SolverConfig(method="PCGD", alpha=1, beta=2))


class TestPX:
    def test_hand_example(self):
        new = px_step(xy_game(), IterateState(np.ones(1), np.ones(1)), 0.5)
        np.testing.assert_allclose(new.x, [0.25])
        np.testing.assert_allclose(new.y, [1.25])
        assert new.grad_calls == 4 and new.hvp_calls == 0

    def test_stationary(self):
        z = np.array([0.1])
        new = px_step(make_bilinear_positive(1.0), IterateState(z, z), 0.3)
        np.testing.assert_array_equal(new.x, z)

    def test_projection(self):
        new = px_step(make_empty_threats(), IterateState(np.array([0.1]), np.array([1.0])), 1.0)
        assert new.x[0] == 0.0

    def test_pxm_quadratic_equals_px(self):
        game = make_quadratic_game(3, 2, seed=7)
        rng = np.random.default_rng(7)
        for _ in range(10):
            x, y = rng.normal(size=3), rng.normal(size=2)
            eta = rng.uniform(0.01, 0.3)
            config = SolverConfig(method="PXM", alpha=1 / eta, beta=1 / eta)
            a = pxm_step(game, initial_state(game, x, y, config), config)
            b = px_step(game, IterateState(x, y), eta)
            np.testing.assert_allclose(a.x, b.x, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(a.y, b.y, rtol=1e-12, atol=1e-14)

    def test_pxm_definition(self):
        game = make_empty_threats()
        config = SolverConfig(method="PXM", alpha=3.0, beta=2.0)
        psi = ShannonEntropy(1)
        x, y = np.array([0.7]), np.array([1.4])
        new = pxm_step(game, initial_state(game, x, y, config), config)
        xh = mirror_descent_step(psi, x, game.grad_x_f(x, y), 3.0)
        yh = mirror_descent_step(psi, y, game.grad_y_g(x, y), 2.0)
        np.testing.assert_allclose(new.x, mirror_descent_step(psi, x, game.grad_x_f(xh, yh), 3.0), rtol=1e-15)
        np.testing.assert_allclose(new.y, mirror_descent_step(psi, y, game.grad_y_g(xh, yh), 2.0), rtol=1e-15)
        assert new.grad_calls == 4


class TestRunSolver:
    def test_max_iters_zero(self):
        trace = run_solver(make_empty_threats(), [1.0], [1.0], SolverConfig(max_iters=0))
        assert len(trace) == 1 and trace.final.iter == 0
        assert trace.status == "max_iters"
        np.testing.assert_array_equal(trace.x, [1.0])

    def test_infeasible_start(self):
        game = make_empty_threats()
        for method in ("CMD", "CMW", "PXM", "MD"):
            with pytest.raises(ConfigError):
                run_solver(game, [0.0], [1.0], SolverConfig(method=method))
        for method in ("PCGD", "PX"):
            with pytest.raises(ConfigError):
                run_solver(game, [-0.1], [1.0], SolverConfig(method=method))
            run_solver(game, [0.0], [1.0], SolverConfig(method=method, max_iters=1))
        with pytest.raises(ConfigError):
            run_solver(game, [1.0, 1.0], [1.0], SolverConfig())
        with pytest.raises(ConfigError):
            run_solver(game, [np.nan], [1.0], SolverConfig())

    def test_config_validation(self):
        for bad in (dict(method="XYZ"), dict(alpha=0), dict(beta=-1), dict(divergence_cap=0),
                    dict(krylov_tol=0), dict(max_iters=-1)):
            with pytest.raises(ConfigError):
                SolverConfig(**bad)
        with pytest.raises(ConfigError) as info:
            SolverConfig(method="XYZ")
        for m in ("CMD", "CMW", "PCGD", "PX", "PXM", "MD"):
            assert m in str(info.value)

    def test_accounting(self):
        game = make_empty_threats()
        cases = {"PX": dict(alpha=4.0, beta=4.0), "PXM": dict(alpha=4.0, beta=4.0),
                 "MD": dict(alpha=4.0, beta=4.0), "CMW": dict(alpha=4.0, beta=4.0),
                 "CMD": dict(alpha=4.0, beta=4.0), "PCGD": dict(alpha=4.0, beta=4.0)}
        for method, kw in cases.items():
            trace = run_solver(game, [1.0], [1.0], SolverConfig(method=method, max_iters=20, **kw))
            dg = np.diff(trace.column("grad_calls"))
            dh = np.diff(trace.column("hvp_calls"))
            k = trace.column("krylov_iters")[1:]
            if method in ("PX", "PXM"):
                assert np.all(dg == 4) and np.all(dh == 0)
            elif method == "MD":
                assert np.all(dg == 2) and np.all(dh == 0)
            else:
                assert np.all(dg == 2) and np.all(dh == 2 + 2 * k)
                assert np.all(dg + dh == 4 + 2 * k) and np.all(k >= 1)

    def test_alternating_accounting(self):
        trace = run_solver(make_empty_threats(), [1.0], [1.0],
                           SolverConfig(method="CMW", alpha=4, beta=4, alternating=True, max_iters=10))
        dg = np.diff(trace.column("grad_calls"))
        dh = np.diff(trace.column("hvp_calls"))
        k = trace.column("krylov_iters")[1:]
        assert np.all(dg == 2) and np.all(dh == 2 + 2 * k)

    def test_trace_invariants(self):
        trace = run_solver(make_empty_threats(), [1.0], [1.0], SolverConfig(alpha=4, beta=4, max_iters=50),
                           stride=7)
        it = trace.column("iter")
        assert np.all(np.diff(it) > 0)
        assert it[0] == 0 and it[-1] == 50
        assert set(it[1:-1] % 7) == {0}
        assert np.all(np.diff(trace.column("grad_calls")) >= 0)
        assert np.all(np.diff(trace.column("hvp_calls")) >= 0)
        assert trace.final.status == "max_iters"
        assert all(r.status in ("ok", "clamped") for r in trace.records[:-1])

    def test_converged_status(self):
        config = SolverConfig(method="CMD", alpha=4.0, beta=4.0, stop_grad_norm=1e-9, max_iters=1000)
        problem = make_constrained_qp(np.array([0.3, -0.2, 0.5]))
        game, _ = lagrangian_transform(problem)
        trace = run_solver(game, np.zeros(3), [0.0], config)
        assert trace.status == "converged"
        assert trace.final.grad_norm <= 1e-9

    def test_already_converged(self):
        z = np.array([0.1])
        trace = run_solver(make_bilinear_positive(1.0), z, z, SolverConfig(stop_grad_norm=1e-12))
        assert trace.status == "converged" and len(trace) == 1

    def test_stop_step_norm(self):
        trace = run_solver(make_empty_threats(), [1.0], [1.0],
                           SolverConfig(method="CMW", alpha=4, beta=4, stop_step_norm=1e-6, max_iters=5000))
        assert trace.status == "converged" and trace.final.iter < 5000

    def test_divergence_cap(self):
        trace = run_solver(xy_game(), [1.0], [1.0], SolverConfig(method="PX", alpha=0.1, beta=0.1,
                                                                  divergence_cap=1e6, max_iters=1000))
        assert trace.status == "diverged"
        assert trace.final.iter < 1000

    def test_nan_is_recorded_not_raised(self):
        game = TwoPlayerGame(1, 1, lambda x, y: 0.0, lambda x, y: 0.0,
                             lambda x, y: np.array([np.nan if x[0] < 0.5 else 1.0]), lambda x, y: np.zeros(1),
                             lambda x, y, v: np.zeros(1), lambda x, y, v: np.zeros(1), zero_sum=True,
                             x_layout=(Block("x", 1, POSITIVE),), y_layout=(Block("y", 1, POSITIVE),))
        for method in ("PXM", "MD", "CMW", "PX"):
            trace = run_solver(game, [1.0], [1.0], SolverConfig(method=method, alpha=1.0, beta=1.0))
            assert trace.status == "diverged", method

    def test_krylov_failure_is_recorded(self):
        game = positive_game(6, 5, 5)
        trace = run_solver(game, np.ones(6), np.ones(5),
                           SolverConfig(method="CMW", alpha=0.01, beta=0.01, krylov_tol=1e-14, krylov_max_iter=1))
        assert trace.status == "diverged"
        assert trace.message.startswith("StepError")

    def test_clamp_events_counted(self):
        game = make_empty_threats()
        trace = run_solver(game, [1.0], [1.0], SolverConfig(method="MD", alpha=1e-3, beta=1e-3, max_iters=3,
                                                            divergence_cap=1e308))
        assert trace.clamp_events >= 1
        assert "clamped" in {r.status for r in trace.records} or trace.final.status != "ok"

    def test_keep_iterates(self):
        trace = run_solver(make_empty_threats(), [1.0], [1.0], SolverConfig(max_iters=3), keep_iterates=False)
        assert all(r.x is None for r in trace.records)
        trace = run_solver(make_empty_threats(), [1.0], [1.0], SolverConfig(max_iters=3))
        np.testing.assert_array_equal(trace.final.x, trace.x)

    def test_deterministic(self):
        game, _ = lagrangian_transform(make_robust_regression(5, 10, 1)[0])
        config = SolverConfig(method="CMW", alpha=100, beta=10, max_iters=30)
        a = run_solver(game, np.full(10, 0.1), [0.0], config, timing=False)
        b = run_solver(game, np.full(10, 0.1), [0.0], config, timing=False)
        rows = lambda tr: [[_fmt(v) for v in r.row()] for r in tr.records]
        assert rows(a) == rows(b)
