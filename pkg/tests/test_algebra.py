"""Symbolic engine: brackets, quantization maps, series, exact identities."""

import random
from fractions import Fraction

import numpy as np
import pytest

from halfq import (
    AlgebraError,
    CNum,
    NonTerminatingSeriesError,
    Symbol,
    System,
    SystemMismatchError,
    UnquantizationWarning,
    commutator,
    div_ihbar,
    half_quantize,
    heisenberg_series,
    hybrid_bracket,
    jacobiator,
    mul_ihbar,
    parse_expression,
    partial_derivative,
    poisson_bracket,
    unquantize,
    weyl_quantize,
)
from halfq.algebra import find_jacobiator_witness, hybrid_monomials

S11 = System(1, 1)
CONSTS = ("m", "M", "k")


def example_hamiltonian(system=S11):
    return parse_expression("P1^2/(2*M) + p1^2/(2*m) + k*q1*P1", system, CONSTS)


def random_classical_poly(rng, system, degree, dofs=1):
    """Random classical polynomial with small rational coefficients."""
    expr = system.zero()
    for _ in range(rng.randint(2, 5)):
        term = system.scalar(Fraction(rng.randint(-8, 8), rng.randint(1, 4)))
        budget = rng.randint(0, degree)
        for _ in range(budget):
            i = rng.randint(1, dofs)
            term = term * (system.q(i) if rng.random() < 0.5 else system.p(i))
        expr = expr + term
    return expr


# --------------------------------------------------------------------------
# commutators and Poisson brackets


def test_ccr():
    assert commutator(S11.Q(1), S11.P(1)) == mul_ihbar(S11.one())


def test_classical_scalars_commute():
    assert commutator(S11.q(1), S11.P(1) ** 2).is_zero
    assert commutator(S11.q(1) * S11.p(1), S11.Q(1) * S11.P(1)).is_zero


def test_commutator_with_example_hamiltonian():
    # [Q1, H] = i hbar (P1/M + k q1); cross-checked against the t-linear
    # coefficient of the series solution below
    h = example_hamiltonian()
    got = commutator(S11.Q(1), h)
    want = mul_ihbar(
        parse_expression("M^-1*P1 + k*q1", S11, CONSTS)
    )
    assert got == want
    series = heisenberg_series(S11.Q(1), h)
    t_linear = {
        (hb, tuple(kv for kv in consts if kv[0] != "t"), cl, word): c
        for (hb, consts, cl, word), c in series.terms()
        if dict(consts).get("t") == 1
    }
    from halfq.algebra import HybridExpression

    assert HybridExpression(S11, t_linear) == div_ihbar(got)


def test_poisson_examples():
    q, p = S11.q(1), S11.p(1)
    assert poisson_bracket(q, p) == S11.one()
    assert poisson_bracket(q * q, p) == 2 * q
    m = S11.const("m")
    assert poisson_bracket(q, p * p * S11.const("m", -1) / 2) == p * S11.const("m", -1)


def test_bracket_antisymmetry_and_bilinearity():
    rng = random.Random(11)
    sys2 = System(2, 2)
    for _ in range(25):
        a = random_hybrid(rng, sys2, 3)
        b = random_hybrid(rng, sys2, 3)
        c = random_hybrid(rng, sys2, 2)
        assert (commutator(a, b) + commutator(b, a)).is_zero
        assert (hybrid_bracket(a, b) + hybrid_bracket(b, a)).is_zero
        lam = Fraction(rng.randint(-4, 4), rng.randint(1, 3))
        assert commutator(a * lam + c, b) == commutator(a, b) * lam + commutator(c, b)
        assert hybrid_bracket(a * lam + c, b) == hybrid_bracket(a, b) * lam + hybrid_bracket(c, b)


def random_hybrid(rng, system, degree):
    expr = system.zero()
    for _ in range(rng.randint(1, 4)):
        term = system.scalar(Fraction(rng.randint(-5, 5), rng.randint(1, 3)))
        for _ in range(rng.randint(0, degree)):
            pick = rng.random()
            i = rng.randint(1, system.classical)
            a = rng.randint(1, system.quantum)
            if pick < 0.25:
                term = term * system.q(i)
            elif pick < 0.5:
                term = term * system.p(i)
            elif pick < 0.75:
                term = term * system.Q(a)
            else:
                term = term * system.P(a)
        expr = expr + term
    return expr


def test_system_mismatch_rejected():
    with pytest.raises(SystemMismatchError):
        commutator(S11.q(1), System(2, 1).q(1))


# --------------------------------------------------------------------------
# canonicalization


def test_canonicalization_confluence_under_reassociation():
    # multiplying the same factors in any association/evaluation order must
    # land on the same canonical form
    rng = random.Random(23)
    sys2 = System(2, 2)
    for _ in range(30):
        factors = [random_hybrid(rng, sys2, 2) for _ in range(4)]
        left = factors[0]
        for f in factors[1:]:
            left = left * f
        right = factors[0] * (factors[1] * (factors[2] * factors[3]))
        middle = (factors[0] * factors[1]) * (factors[2] * factors[3])
        assert left == right == middle


def test_normal_order_within_dof():
    word = S11.P(1) * S11.Q(1) * S11.P(1)  # P Q P
    # P Q P = (QP - i hbar) P = Q P^2 - i hbar P
    want = S11.Q(1) * S11.P(1) ** 2 - mul_ihbar(S11.P(1))
    assert word == want


def test_distinct_dofs_commute():
    sys2 = System(0, 2)
    assert sys2.P(2) * sys2.Q(1) == sys2.Q(1) * sys2.P(2)


# --------------------------------------------------------------------------
# quantization maps


def test_weyl_examples():
    sc = System(1, 0)
    sq = System(0, 1)
    assert weyl_quantize(sc.q(1)) == sq.Q(1)
    # symmetrized q p -> Q P - i hbar / 2
    assert weyl_quantize(sc.q(1) * sc.p(1)) == sq.Q(1) * sq.P(1) - mul_ihbar(
        sq.one()
    ) / 2
    # symmetrized q^2 p, canonical form Q^2 P - i hbar Q
    got = weyl_quantize(sc.q(1) ** 2 * sc.p(1))
    assert got == sq.Q(1) ** 2 * sq.P(1) - mul_ihbar(sq.Q(1))


def test_weyl_matches_matrix_ordering_average():
    # independent oracle: average the three operator orderings of q^2 p
    # numerically; grid commutators only realize the CCR on smooth packets,
    # so the comparison acts on a bulk state rather than matrix entries
    from halfq.hilbert import (
        Grid,
        evaluate_symbolic,
        gaussian_state,
        momentum_operator,
        position_operator,
    )

    g = Grid(64, -12.0, 12.0)
    qm = position_operator(g).matrix
    pm = momentum_operator(g, 1.0).matrix
    oracle = (qm @ qm @ pm + qm @ pm @ qm + pm @ qm @ qm) / 3.0
    sc = System(1, 0)
    sym = weyl_quantize(sc.q(1) ** 2 * sc.p(1))
    mat = evaluate_symbolic(sym, {}, {1: g}, 1.0).matrix
    psi = gaussian_state(g, 0.5, 0.8, 1.0, 1.0).amplitudes
    np.testing.assert_allclose(mat @ psi, oracle @ psi, atol=1e-8)


def test_weyl_rejects_quantum_input():
    with pytest.raises(AlgebraError):
        weyl_quantize(S11.Q(1))


def test_unquantize_examples():
    sq = System(0, 1)
    sc = System(1, 0)
    assert unquantize(sq.Q(1) * sq.P(1), 1) == sc.q(1) * sc.p(1) + mul_ihbar(sc.one()) / 2
    symmetrized = (sq.Q(1) * sq.P(1) + sq.P(1) * sq.Q(1)) / 2
    assert unquantize(symmetrized, 1) == sc.q(1) * sc.p(1)


def test_unquantize_requires_operator_input():
    with pytest.raises(AlgebraError):
        unquantize(S11.q(1), 1)
    with pytest.raises(AlgebraError):
        unquantize(System(0, 1).Q(1), 0)


def test_round_trip_degree_six_exhaustive():
    # identity on every classical monomial up to degree 6, one DOF
    sc = System(1, 0)
    rng = random.Random(5)
    for a in range(7):
        for b in range(7 - a):
            if a + b == 0:
                continue
            coeff = Fraction(rng.randint(1, 9), rng.randint(1, 4))
            mono = sc.q(1) ** a * sc.p(1) ** b * coeff
            assert unquantize(weyl_quantize(mono), 1) == mono, (a, b)


def test_round_trip_two_dofs():
    sc = System(2, 0)
    rng = random.Random(6)
    for _ in range(20):
        poly = random_classical_poly(rng, sc, 5, dofs=2)
        assert unquantize(weyl_quantize(poly), 2) == poly


def test_round_trip_specific_cubic():
    sc = System(1, 0)
    mono = sc.q(1) ** 3 * sc.p(1) ** 2
    assert unquantize(weyl_quantize(mono), 1) == mono


def test_unquantize_self_adjointness():
    # V(A^dagger) = V(A)^dagger; quantized real polynomials stay self-adjoint
    rng = random.Random(7)
    sc = System(1, 0)
    for _ in range(15):
        poly = random_classical_poly(rng, sc, 4)
        a_hat = weyl_quantize(poly)
        assert a_hat.adjoint() == a_hat
        assert unquantize(a_hat.adjoint(), 1) == unquantize(a_hat, 1).adjoint()


def test_unquantized_commutator_matches_poisson_to_first_order():
    # V([A^, B^]) - i hbar {A, B} vanishes below the hbar^2 grading
    rng = random.Random(9)
    sc = System(1, 0)
    for _ in range(20):
        a = random_classical_poly(rng, sc, 4)
        b = random_classical_poly(rng, sc, 4)
        lhs = unquantize(commutator(weyl_quantize(a), weyl_quantize(b)), 1,
                         magnitude_guard=None)
        rhs = mul_ihbar(poisson_bracket(a, b))
        diff = lhs - rhs
        assert all(h >= 2 for h in diff.hbar_grades()), (a, b)


def test_half_quantize_scalar_function_passthrough():
    sc = System(2, 0)
    f = sc.q(1) ** 2 * sc.p(1) + 3 * sc.p(1)
    got = half_quantize(f, (1, 1))
    want = parse_expression("q1^2*p1 + 3*p1", S11)
    assert got == want


def test_half_quantize_example_hamiltonian():
    sc = System(2, 0)
    h_classical = parse_expression("p2^2/(2*M) + p1^2/(2*m) + k*q1*p2", sc, CONSTS)
    got = half_quantize(h_classical, (1, 1))
    assert got == example_hamiltonian()


def test_half_quantize_single_symbol():
    sc = System(2, 0)
    assert half_quantize(sc.q(2), (1, 1)) == S11.Q(1)
    assert half_quantize(sc.q(1), (1, 1)) == S11.q(1)


def test_half_quantize_bad_split():
    sc = System(2, 0)
    with pytest.raises(AlgebraError):
        half_quantize(sc.q(1), (1, 2))
    with pytest.raises(AlgebraError):
        half_quantize(sc.q(1), (2, 0))


def test_half_quantize_intertwines_poisson_and_hybrid_bracket():
    # half(A,B)_poisson = (1/i hbar)(half A, half B) for degree <= 4
    rng = random.Random(13)
    sc = System(2, 0)
    for _ in range(15):
        a = random_classical_poly(rng, sc, 4, dofs=2)
        b = random_classical_poly(rng, sc, 4, dofs=2)
        lhs = half_quantize(poisson_bracket(a, b), (1, 1)) if not poisson_bracket(a, b).is_zero else S11.zero()
        rhs = div_ihbar(hybrid_bracket(half_quantize(a, (1, 1)), half_quantize(b, (1, 1))))
        assert lhs == rhs, (a, b)


def test_unquantization_magnitude_guard_warns():
    # an operator whose unquantization is pure hbar correction: the hbar^0
    # grade cannot dominate the hbar^2 residual
    sq = System(0, 1)
    sc = System(1, 0)
    x = sq.Q(1) ** 2 * sq.P(1) ** 2 - weyl_quantize(sc.q(1) ** 2 * sc.p(1) ** 2)
    with pytest.warns(UnquantizationWarning):
        result = unquantize(x, 1)
    assert result.coefficient_scale(0) == 0.0
    assert any(h >= 2 for h in result.hbar_grades())


# --------------------------------------------------------------------------
# hybrid bracket and dynamics


def test_hybrid_bracket_generates_example_flow():
    h = example_hamiltonian()
    m_inv = S11.const("m", -1)
    assert div_ihbar(hybrid_bracket(S11.q(1), h)) == S11.p(1) * m_inv
    assert div_ihbar(hybrid_bracket(S11.p(1), h)) == -S11.const("k") * S11.P(1)
    want = S11.const("M", -1) * S11.P(1) + S11.const("k") * S11.q(1)
    assert div_ihbar(hybrid_bracket(S11.Q(1), h)) == want


def test_heisenberg_series_closed_forms():
    h = example_hamiltonian()
    tconsts = CONSTS + ("t",)
    cases = {
        "q1": "q1 + t/m*p1 - k*t^2/(2*m)*P1",
        "p1": "p1 - k*t*P1",
        "Q1": "Q1 + t/M*P1 + k*t*q1 + k*t^2/(2*m)*p1 - k^2*t^3/(6*m)*P1",
        "P1": "P1",
    }
    for name, closed in cases.items():
        obs = parse_expression(name, S11)
        got = heisenberg_series(obs, h)
        assert got == parse_expression(closed, S11, tconsts), name


def test_series_constant_observable():
    h = example_hamiltonian()
    assert heisenberg_series(S11.P(1), h) == S11.P(1)


def test_series_free_particle():
    h_free = parse_expression("P1^2/(2*M) + p1^2/(2*m)", S11, CONSTS)
    got = heisenberg_series(S11.q(1), h_free)
    assert got == parse_expression("q1 + t/m*p1", S11, CONSTS + ("t",))


def test_series_numeric_time():
    h = example_hamiltonian()
    got = heisenberg_series(S11.q(1), h, time=Fraction(1, 2))
    want = parse_expression("q1 + p1/(2*m) - k/(8*m)*P1", S11, CONSTS)
    assert got == want


def test_series_commutator_bracket_full_quantum():
    sq = System(0, 2)
    sc = System(2, 0)
    h_full = weyl_quantize(
        parse_expression("p2^2/(2*M) + p1^2/(2*m) + k*q1*p2", sc, CONSTS)
    )
    got = heisenberg_series(sq.Q(1), h_full, bracket="commutator")
    want = parse_expression("Q1 + t/m*P1 - k*t^2/(2*m)*P2", sq, CONSTS + ("t",))
    assert got == want


def test_non_terminating_series_raises_with_iterates():
    h_osc = parse_expression("p1^2/2 + q1^2/2", S11)
    with pytest.raises(NonTerminatingSeriesError) as err:
        heisenberg_series(S11.q(1), h_osc)
    assert err.value.iterates
    assert err.value.iterates[0] == S11.p(1)
    # truncation succeeds and matches cos/sin Taylor coefficients
    truncated = heisenberg_series(S11.q(1), h_osc, max_order=4)
    want = parse_expression(
        "q1 + t*p1 - t^2/2*q1 - t^3/6*p1 + t^4/24*q1", S11, ("t",)
    )
    assert truncated == want


# --------------------------------------------------------------------------
# derivatives


def test_partial_derivative_examples():
    q, p = S11.q(1), S11.p(1)
    assert partial_derivative(q**2 * p, Symbol.q(1)) == 2 * q * p
    assert partial_derivative(S11.Q(1), Symbol.q(1)).is_zero
    h = example_hamiltonian()
    sol = heisenberg_series(S11.q(1), h)
    got = partial_derivative(sol, Symbol.p(1))
    assert got == parse_expression("t/m", S11, CONSTS + ("t",))


def test_partial_derivative_rejects_quantum_symbol():
    with pytest.raises(AlgebraError):
        partial_derivative(S11.Q(1), Symbol.Q(1))


def test_partial_derivative_leibniz():
    rng = random.Random(3)
    sys2 = System(2, 1)
    for _ in range(10):
        a = random_hybrid(rng, sys2, 3)
        b = random_hybrid(rng, sys2, 3)
        s = Symbol.q(1)
        lhs = partial_derivative(a * b, s)
        rhs = partial_derivative(a, s) * b + a * partial_derivative(b, s)
        assert lhs == rhs


# --------------------------------------------------------------------------
# jacobiator


def test_jacobiator_vanishes_on_pure_sectors():
    assert jacobiator(S11.Q(1), S11.P(1), S11.Q(1) * S11.P(1)).is_zero
    assert jacobiator(S11.q(1), S11.p(1), S11.q(1) * S11.p(1)).is_zero


def test_recorded_jacobiator_witness():
    a = parse_expression("p1*P1", S11)
    b = parse_expression("p1*Q1*P1", S11)
    c = parse_expression("q1^2*Q1", S11)
    j = jacobiator(a, b, c)
    assert j == S11.hbar(4) / 2
    # analytically derived companion witness
    j2 = jacobiator(
        S11.q(1) * S11.Q(1) ** 2,
        S11.p(1) * S11.P(1),
        S11.q(1) * S11.p(1) * S11.P(1),
    )
    assert j2 == -S11.hbar(4) / 2


def test_no_witness_below_degree_three():
    assert find_jacobiator_witness(max_degree=2) is None


def test_exhaustive_witness_search_reproduces_recorded_triple():
    witness = find_jacobiator_witness(max_degree=3)
    assert witness is not None
    a, b, c, j = witness
    assert a == parse_expression("p1*P1", S11)
    assert b == parse_expression("p1*Q1*P1", S11)
    assert c == parse_expression("q1^2*Q1", S11)
    assert j == S11.hbar(4) / 2


def test_monomial_enumeration_count():
    # 4 + 10 + 20 monomials of degree 1..3 over q, p, Q, P
    assert len(hybrid_monomials(S11, 3)) == 34


# --------------------------------------------------------------------------
# misc exact structure


def test_adjoint_reverses_products():
    expr = S11.Q(1) * S11.P(1)
    assert expr.adjoint() == S11.P(1) * S11.Q(1)
    assert expr.adjoint().adjoint() == expr


def test_cnum_arithmetic():
    a = CNum(Fraction(1, 2), Fraction(3))
    b = CNum(0, 1)
    assert a * b == CNum(-3, Fraction(1, 2))
    assert (a * a.inverse()) == CNum(1)
    assert a.conjugate().im == -3


def test_substitute_constants():
    expr = parse_expression("k*q1/(2*m)", S11, ("m", "k"))
    got = expr.substitute_constants({"k": Fraction(1, 10), "m": 2})
    assert got == S11.q(1) * Fraction(1, 40)


def test_mul_div_ihbar_inverse():
    expr = parse_expression("q1*P1 + hbar*Q1", S11)
    assert div_ihbar(mul_ihbar(expr)) == expr
    with pytest.raises(AlgebraError):
        div_ihbar(S11.q(1))
