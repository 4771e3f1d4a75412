import cvxpy as cp
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from dispatchlab.errors import InfeasibleProgramError, InvalidInputError, UnboundedProgramError
from dispatchlab.optimizer import ConvexProgram, PrimalDualSolution, check_kkt, solve


def one_var():
    return ConvexProgram(cost_linear=[3.0], lower=[5.0])


def m1_flat():
    # variables: G1@1, G2@1, G1@2, G2@2
    A_eq = [[1, 1, 0, 0], [0, 0, 1, 1]]
    A_ub = [[-1, 0, 1, 0], [1, 0, -1, 0], [0, -1, 0, 1], [0, 1, 0, -1]]
    return ConvexProgram(cost_linear=[10, 30, 10, 30], A_eq=A_eq, b_eq=[100, 150],
                         A_ub=A_ub, b_ub=[20, 20, 200, 200], lower=np.zeros(4), upper=np.full(4, 200.0))


def test_one_variable_lower_bound_dual():
    sol = solve(one_var())
    assert sol.x[0] == pytest.approx(5.0)
    assert sol.lower_duals[0] == pytest.approx(3.0)
    assert sol.objective == pytest.approx(15.0)


def test_m1_flat_balance_duals():
    sol = solve(m1_flat())
    np.testing.assert_allclose(sol.eq_duals, [-10.0, 30.0], atol=1e-9)
    np.testing.assert_allclose(sol.x, [100, 0, 120, 30], atol=1e-9)
    assert sol.ineq_duals[0] == pytest.approx(20.0)
    assert sol.objective == pytest.approx(3100.0)
    assert sol.kkt.max() <= 1e-9


def test_m1_hand_solution_passes_kkt():
    prog = m1_flat()
    hand = PrimalDualSolution(x=np.array([100.0, 0, 120, 30]), eq_duals=np.array([-10.0, 30.0]),
                              ineq_duals=np.array([20.0, 0, 0, 0]), lower_duals=np.array([0, 40.0, 0, 0]),
                              upper_duals=np.zeros(4), objective=3100.0)
    assert check_kkt(prog, hand).max() <= 1e-9


def test_check_kkt_exact_and_perturbed():
    prog = one_var()
    exact = PrimalDualSolution(np.array([5.0]), np.zeros(0), np.zeros(0), np.array([3.0]), np.zeros(1), 15.0)
    assert check_kkt(prog, exact).as_tuple() == (0.0, 0.0, 0.0)
    moved = PrimalDualSolution(np.array([6.0]), np.zeros(0), np.zeros(0), np.array([3.0]), np.zeros(1), 18.0)
    res = check_kkt(prog, moved)
    assert res.stationarity > 0 or res.complementarity > 0


def test_check_kkt_dimension_mismatch():
    bad = PrimalDualSolution(np.zeros(2), np.zeros(0), np.zeros(0), np.zeros(2), np.zeros(2), 0.0)
    with pytest.raises(InvalidInputError):
        check_kkt(one_var(), bad)


def test_infeasible_reports_constraints():
    prog = ConvexProgram(cost_linear=[1.0], A_eq=[[1.0]], b_eq=[4.0], upper=[3.0],
                         eq_labels=["x_equals_4"], var_labels=["x"])
    with pytest.raises(InfeasibleProgramError) as exc:
        solve(prog)
    assert exc.value.violated


def test_unbounded_reports_direction():
    with pytest.raises(UnboundedProgramError) as exc:
        solve(ConvexProgram(cost_linear=[-1.0], lower=[0.0]))
    assert exc.value.direction is not None


def test_quadratic_cost_dual():
    # min x^2 - 4x, x <= 1: x = 1, upper dual 2
    sol = solve(ConvexProgram(cost_linear=[-4.0], cost_quadratic=[1.0], upper=[1.0]))
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.upper_duals[0] == pytest.approx(2.0, abs=1e-6)


def test_malformed_program_rejected():
    with pytest.raises(InvalidInputError):
        ConvexProgram(cost_linear=[1.0, 2.0], A_eq=[[1.0]], b_eq=[1.0])
    with pytest.raises(InvalidInputError):
        ConvexProgram(cost_linear=[1.0], cost_quadratic=[-1.0])
    with pytest.raises(InvalidInputError):
        ConvexProgram(cost_linear=[1.0], lower=[2.0], upper=[1.0])


@st.composite
def boxed_lps(draw, quadratic=False):
    n = draw(st.integers(2, 6))
    m_eq = draw(st.integers(0, 2))
    m_ub = draw(st.integers(0, 4))
    f = st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 3))
    c = np.array([draw(f) for _ in range(n)])
    x0 = np.array([draw(st.floats(0, 10).map(lambda v: round(v, 3))) for _ in range(n)])
    A_eq = np.array([[draw(f) for _ in range(n)] for _ in range(m_eq)]).reshape(m_eq, n)
    A_ub = np.array([[draw(f) for _ in range(n)] for _ in range(m_ub)]).reshape(m_ub, n)
    slack = np.array([draw(st.floats(0, 3).map(lambda v: round(v, 3))) for _ in range(m_ub)])
    h = np.array([draw(st.floats(0, 2)) for _ in range(n)]) if quadratic else np.zeros(n)
    # x0 is feasible by construction; box bounds keep the program bounded
    return ConvexProgram(cost_linear=c, cost_quadratic=h, A_eq=A_eq, b_eq=A_eq @ x0, A_ub=A_ub,
                         b_ub=A_ub @ x0 + slack, lower=np.zeros(n), upper=np.full(n, 10.0))


def _cvx_value(p: ConvexProgram) -> float:
    x = cp.Variable(p.num_vars)
    obj = p.cost_linear @ x + cp.sum(cp.multiply(p.cost_quadratic, cp.square(x)))
    cons = [x >= p.lower, x <= p.upper]
    if p.A_eq.shape[0]:
        cons.append(p.A_eq @ x == p.b_eq)
    if p.A_ub.shape[0]:
        cons.append(p.A_ub @ x <= p.b_ub)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


@given(boxed_lps())
def test_lp_matches_oracle_and_strong_duality(prog):
    sol = solve(prog)
    assert sol.kkt.max() <= 1e-8
    assert sol.objective == pytest.approx(_cvx_value(prog), abs=1e-6 * (1 + abs(sol.objective)))
    assert abs(sol.objective - sol.dual_objective(prog)) <= 1e-8 * (1 + abs(sol.objective))


@given(boxed_lps(quadratic=True))
def test_qp_matches_oracle(prog):
    sol = solve(prog)
    assert sol.kkt.max() <= 1e-8
    assert sol.objective == pytest.approx(_cvx_value(prog), abs=1e-6 * (1 + abs(sol.objective)))


@given(boxed_lps())
def test_repeat_solves_identical(prog):
    a, b = solve(prog), solve(prog)
    assert np.max(np.abs(a.x - b.x), initial=0.0) <= 1e-12


@given(boxed_lps(), st.floats(0.1, 50))
def test_cost_scaling_scales_duals(prog, k):
    base = solve(prog)
    assume(not base.degenerate)
    scaled = ConvexProgram(prog.cost_linear * k, prog.cost_quadratic * k, prog.A_eq, prog.b_eq,
                           prog.A_ub, prog.b_ub, prog.lower, prog.upper)
    sol = solve(scaled)
    np.testing.assert_allclose(sol.x, base.x, atol=1e-8 * (1 + np.abs(base.x).max()))
    for a, b in ((sol.eq_duals, base.eq_duals), (sol.ineq_duals, base.ineq_duals),
                 (sol.lower_duals, base.lower_duals), (sol.upper_duals, base.upper_duals)):
        np.testing.assert_allclose(a, k * b, atol=1e-7 * k * (1 + np.abs(prog.cost_linear).max()))
