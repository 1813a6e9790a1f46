import numpy as np
import pytest

from ris_resilience.config import SolverSettings
from ris_resilience.conic import (AffineExpr, ConeConstraint, ProgramBuilder,
                                  dump_program, load_program, primal_residual,
                                  solve, validate)


def lp_min_x_geq_3():
    b = ProgramBuilder()
    x = b.add_vars(1, "x")
    b.add_obj(x, 1.0)
    b.add_constraint("nonneg", [b.expr([x], [1.0], -3.0)])
    return b.build()


class TestValidate:
    def test_empty_program_is_valid(self):
        prog = ProgramBuilder().build()
        d = validate(prog)
        assert d.ok and d.num_scalar_rows == 0

    def test_soc_dim_one_rejected(self):
        b = ProgramBuilder()
        x = b.add_vars(1, "x")
        b.add_constraint("soc", [b.expr([x], [1.0])])
        d = validate(b.build())
        assert not d.ok and any("soc" in e for e in d.errors)

    def test_exp_arity_enforced(self):
        b = ProgramBuilder()
        x = b.add_vars(1, "x")
        b.add_constraint("exp", [b.expr([x], [1.0]), b.expr([], [], 1.0)])
        assert not validate(b.build()).ok

    def test_out_of_range_index(self):
        b = ProgramBuilder()
        b.add_vars(2, "x")
        b.add_constraint("nonneg", [b.expr([5], [1.0])])
        d = validate(b.build())
        assert not d.ok and any("out of range" in e for e in d.errors)

    def test_nan_coefficients_flagged(self):
        b = ProgramBuilder()
        x = b.add_vars(1, "x")
        b.add_constraint("nonneg", [b.expr([x], [np.nan])])
        assert not validate(b.build()).ok


class TestSolve:
    def test_trivial_lp(self):
        sol = solve(lp_min_x_geq_3())
        assert sol.status == "optimal"
        assert sol.x[0] == pytest.approx(3.0, abs=1e-7)
        assert sol.objective == pytest.approx(3.0, abs=1e-7)

    def test_soc_analytic(self):
        # max x + y over the unit disc -> (sqrt(2)/2, sqrt(2)/2)
        b = ProgramBuilder()
        x = b.add_vars(2, "x")
        b.add_obj([x, x + 1], [-1.0, -1.0])
        b.add_constraint("soc", [b.expr([], [], 1.0),
                                 b.expr([x], [1.0]), b.expr([x + 1], [1.0])])
        sol = solve(b.build())
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(-np.sqrt(2.0), abs=1e-7)
        np.testing.assert_allclose(sol.x, np.sqrt(2) / 2, atol=1e-6)

    def test_exponential_cone_log_bound(self):
        # max r s.t. r <= log(1+q), q <= 1  ->  r = log 2
        b = ProgramBuilder()
        r = b.add_vars(1, "r")
        q = b.add_vars(1, "q")
        b.add_obj(r, -1.0)
        b.add_constraint("exp", [b.expr([r], [1.0]), b.expr([], [], 1.0),
                                 b.expr([q], [1.0], 1.0)])
        b.add_constraint("nonneg", [b.expr([q], [-1.0], 1.0), b.expr([q], [1.0])])
        sol = solve(b.build())
        assert sol.status == "optimal"
        assert -sol.objective == pytest.approx(np.log(2.0), abs=1e-7)

    def test_variable_bounds(self):
        b = ProgramBuilder()
        x = b.add_vars(1, "x")
        b.add_obj(x, 1.0)
        prog = b.build()
        prog.lower[0] = -2.0
        sol = solve(prog)
        assert sol.x[0] == pytest.approx(-2.0, abs=1e-7)

    def test_determinism(self):
        prog = lp_min_x_geq_3()
        s1 = solve(prog)
        s2 = solve(prog)
        assert s1.status == s2.status
        assert abs(s1.objective - s2.objective) <= 1e-9

    def test_infeasible_detected(self):
        b = ProgramBuilder()
        x = b.add_vars(1, "x")
        b.add_constraint("nonneg", [b.expr([x], [1.0], -1.0)])   # x >= 1
        b.add_constraint("nonneg", [b.expr([x], [-1.0], -1.0)])  # x <= -1
        assert solve(b.build()).status == "infeasible"

    def test_unbounded_detected(self):
        b = ProgramBuilder()
        x = b.add_vars(1, "x")
        b.add_obj(x, -1.0)
        b.add_constraint("nonneg", [b.expr([x], [1.0])])
        assert solve(b.build()).status == "unbounded"

    def test_residual_belt_and_braces(self):
        sol = solve(lp_min_x_geq_3(), SolverSettings())
        assert sol.primal_residual <= 1e-7
        assert primal_residual(lp_min_x_geq_3(), sol.x) <= 1e-7

    def test_invalid_program_raises(self):
        b = ProgramBuilder()
        b.add_vars(1, "x")
        b.add_constraint("nonneg", [b.expr([3], [1.0])])
        with pytest.raises(ValueError):
            solve(b.build())


class TestTextFormat:
    def build_sample(self):
        b = ProgramBuilder()
        x = b.add_vars(2, "w")
        t = b.add_vars(1, "t")
        b.add_obj([x, t], [0.5, -1.0])
        b.obj_const = 2.5
        b.add_constraint("soc", [b.expr([t], [1.0]), b.expr([x], [1.0], 0.25),
                                 b.expr([x + 1], [-2.0])], name="ball")
        b.add_constraint("zero", [b.expr([x, x + 1], [1.0, 1.0], -1.0)], name="sum")
        b.add_constraint("exp", [b.expr([x], [1.0]), b.expr([], [], 1.0),
                                 b.expr([t], [1.0], 1.0)])
        prog = b.build()
        prog.lower[2] = 0.0
        prog.upper[2] = 10.0
        return prog

    def test_roundtrip_preserves_everything(self):
        prog = self.build_sample()
        text = dump_program(prog)
        back = load_program(text)
        assert back.num_vars == prog.num_vars
        assert back.obj_const == prog.obj_const
        np.testing.assert_array_equal(back.obj_coef, prog.obj_coef)
        np.testing.assert_array_equal(back.lower, prog.lower)
        np.testing.assert_array_equal(back.upper, prog.upper)
        assert len(back.constraints) == len(prog.constraints)
        for c1, c2 in zip(prog.constraints, back.constraints):
            assert c1.cone == c2.cone and c1.name == c2.name
            for e1, e2 in zip(c1.exprs, c2.exprs):
                np.testing.assert_array_equal(e1.idx, e2.idx)
                np.testing.assert_array_equal(e1.coef, e2.coef)
                assert e1.const == e2.const
        assert dump_program(back) == text

    def test_solutions_agree_after_roundtrip(self):
        prog = lp_min_x_geq_3()
        back = load_program(dump_program(prog))
        assert abs(solve(prog).objective - solve(back).objective) <= 1e-9

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError):
            load_program("something else\nvars 1\n")

    def test_pretty_smoke(self):
        text = self.build_sample().pretty()
        assert "minimize" in text and "soc[3]" in text and "Kexp" in text
