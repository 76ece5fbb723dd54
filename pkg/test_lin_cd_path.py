"""
Unit tests for the path-constraint baseline
Run: pytest test_lin_cd_path.py -v
"""

import numpy as np
import pytest

import lin_cdic
from errors import ConstraintSpecError
from lin_cd_path import PathConfig, PathFamily, lin_cd_path_fit, path_constraints_from_effects
from lin_cdic import FEAS_EPS, STATUS_SUCCESS, STATUS_UNSATISFIABLE
from metrics import evaluate
from objective import numeric_jacobian
from sem_core import CausalGraph, EffectConstraint, PathConstraint, has_directed_path, is_dag, reachability
from sqp_solver import SolveStatus
from stage_one import Stage1Result
from synth import GroundTruth, SynthConfig, gen_scale_free_dag, sample_constraints, sample_data

D = 3


@pytest.fixture
def X():
    return np.random.default_rng(1).standard_normal((20, D))


@pytest.fixture
def solver_returns(monkeypatch):
    def install(solutions):
        queue = list(solutions)

        def fake_stage1(X, cfg, objcfg):
            return Stage1Result(np.zeros((D, D)), 0.0, 1.0, 0.0, True, 1, 0.0)

        def fake_sqp(problem, W_init, cfg, trace=None):
            W = queue.pop(0) if len(queue) > 1 else queue[0]
            return W, SolveStatus(True, 0, "converged", 1, 0.0, 0.0, 0.0)

        monkeypatch.setattr(lin_cdic, "stage1_fit", fake_stage1)
        monkeypatch.setattr(lin_cdic, "sqp_solve", fake_sqp)

    return install


def chain_weights(a=0.8, b=0.8):
    W = np.zeros((D, D))
    W[0, 1] = a
    W[1, 2] = b
    return W


class TestPathFamily:
    """Test path-constraint plumbing"""

    def test_escalate_adds_epsilon(self):
        """rho grows by epsilon"""
        c = PathFamily().escalate(PathConstraint(0, 2, 0.0), 0.01)
        assert c.rho == pytest.approx(0.01)

    def test_escalate_clears_current_reachability(self):
        """rho jumps past R_ij of the rejected estimate"""
        W = chain_weights(0.2, 0.2)
        R02 = reachability(W)[0, 2]
        c = PathFamily().escalate(PathConstraint(0, 2, 0.0), 0.01, W)
        assert R02 > 0.01
        assert c.rho == pytest.approx(R02 + 0.01)

    def test_escalate_keeps_plain_step_above_reachability(self):
        """When rho already exceeds R_ij the step is epsilon"""
        c = PathFamily().escalate(PathConstraint(0, 2, 0.5), 0.01, chain_weights(0.2, 0.2))
        assert c.rho == pytest.approx(0.51)

    def test_satisfied_by_indirect_path(self):
        """A path through an intermediate node counts"""
        G = CausalGraph.from_edges(D, [(0, 1), (1, 2)])
        family = PathFamily()
        assert family.satisfied(None, G, PathConstraint(0, 2))
        assert not family.satisfied(None, G, PathConstraint(2, 0))

    def test_values_and_jacobian(self):
        """g = R_ij - rho - eps with a matching Jacobian"""
        rng = np.random.default_rng(8)
        W = rng.uniform(-0.5, 0.5, size=(D, D))
        np.fill_diagonal(W, 0.0)
        cs = [PathConstraint(0, 2, 0.1)]
        g, G = PathFamily().values_and_jacobian(W, cs)
        assert g[0] == pytest.approx(reachability(W)[0, 2] - 0.1 - FEAS_EPS)
        numeric = numeric_jacobian(lambda V: PathFamily().values_and_jacobian(V, cs)[0], W)
        np.testing.assert_allclose(G, numeric.reshape(1, D * D), atol=1e-6)


class TestPathConstraintsFromEffects:
    """Test conversion from effect constraints"""

    def test_sign_dropped_and_deduplicated(self):
        """One path per ordered pair"""
        paths = path_constraints_from_effects([
            EffectConstraint(0, 1, 0.01),
            EffectConstraint(2, 1, -0.01),
        ], rho_init=0.05)
        assert [(p.cause, p.target, p.rho) for p in paths] == [(0, 1, 0.05), (2, 1, 0.05)]


class TestLinCdPathFit:
    """Test the driver with path constraints"""

    def test_defaults(self):
        """Path escalation step is 0.01"""
        assert PathConfig().epsilon == 0.01
        with pytest.raises(ValueError):
            PathConfig(rho_init=-1.0)

    def test_indirect_path_met(self, X, solver_returns):
        """0 ~> 2 through node 1 needs no escalation"""
        solver_returns([chain_weights()])
        report = lin_cd_path_fit(X, [PathConstraint(0, 2)])
        assert report.method == "cd-path"
        assert report.status == STATUS_SUCCESS
        assert report.constraints[0].kind == "path"
        assert report.escalation_counts == [0]

    def test_escalates_rho(self, X, solver_returns):
        """A missing path raises rho by epsilon per re-solve"""
        solver_returns([np.zeros((D, D)), np.zeros((D, D)), chain_weights()])
        report = lin_cd_path_fit(X, [PathConstraint(0, 2)])
        outcome = report.constraints[0]
        assert outcome.escalations == 2
        assert outcome.final == pytest.approx(0.02)
        assert outcome.satisfied

    def test_escalation_follows_reachability(self, X, solver_returns):
        """A weak path below omega pushes rho past its own reachability"""
        weak = chain_weights(0.2, 0.2)
        solver_returns([weak, chain_weights()])
        report = lin_cd_path_fit(X, [PathConstraint(0, 2)])
        assert report.success
        assert report.constraints[0].final == pytest.approx(reachability(weak)[0, 2] + 0.01)

    def test_negative_weights_still_a_path(self, X, solver_returns):
        """Path satisfaction is structural, not the sign of R"""
        solver_returns([chain_weights(-0.9, 0.9)])
        report = lin_cd_path_fit(X, [PathConstraint(0, 2)])
        assert report.success

    def test_cap(self, X, solver_returns):
        """A path that never appears exhausts the escalation budget"""
        solver_returns([np.zeros((D, D))])
        report = lin_cd_path_fit(X, [PathConstraint(0, 2)], PathConfig(max_escalations=3))
        assert report.status == STATUS_UNSATISFIABLE
        assert report.escalation_counts == [3]

    def test_rho_init_applied(self, X, solver_returns):
        """Configured rho_init raises every starting threshold"""
        solver_returns([chain_weights()])
        report = lin_cd_path_fit(X, [PathConstraint(0, 2)], PathConfig(rho_init=0.2))
        assert report.constraints[0].initial == pytest.approx(0.2)

    def test_rejects_effect_constraints(self, X):
        """Only PathConstraint is accepted"""
        with pytest.raises(ConstraintSpecError):
            lin_cd_path_fit(X, [EffectConstraint(0, 1, 0.01)])


class TestRealSolver:
    """lin_cd_path_fit with Stage One and SLSQP"""

    def test_weak_link_gets_escalated(self):
        """A link close to omega still leaves a path from 0 to 2"""
        W = np.zeros((3, 3))
        W[0, 1], W[1, 2] = 0.35, 1.0
        gt = GroundTruth.from_weights(W)
        X = sample_data(gt, 200, seed=0)
        report = lin_cd_path_fit(X, [PathConstraint(0, 2)])
        assert report.status == STATUS_SUCCESS
        assert is_dag(report.graph)
        assert has_directed_path(report.graph, 0, 2)
        assert report.kkt <= 1e-3
        metrics = evaluate(gt.W_true, report.W_star)
        assert metrics.nnz == report.graph.nnz
        assert metrics.tpr > 0

    def test_seeded_instance_meets_every_path(self):
        """Ten variables, four constraints drawn from the truth: every path is present"""
        gt = gen_scale_free_dag(SynthConfig(d=10, seed=3))
        X = sample_data(gt, 100, seed=3)
        paths = path_constraints_from_effects(sample_constraints(gt, 4, seed=3))
        report = lin_cd_path_fit(X, paths)
        assert report.status == STATUS_SUCCESS
        assert report.constraint_flags == [True] * 4
        assert all(has_directed_path(report.graph, p.cause, p.target) for p in paths)
        assert is_dag(report.graph)
        assert report.kkt <= 1e-3
        metrics = evaluate(gt.W_true, report.W_star)
        assert 0.0 <= metrics.fdr <= 1.0
        assert metrics.shd >= 0
