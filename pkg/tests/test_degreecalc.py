import math

import numpy as np
import pytest

from cycledeg.degreecalc import (
    Contribution,
    Region,
    brouwer_degree_psi,
    cycle_contacts,
    degree_total,
    find_equilibria,
    poincare_degree,
    theorem2_degree,
    winding_degree,
)
from cycledeg.errors import (
    BoundaryZeroOfPsi,
    DegenerateEquilibrium,
    DimensionTooLarge,
    GrazingContact,
    HypothesisViolation,
    ZeroOnBoundary,
)
from cycledeg.exprcore import SystemSpec
from cycledeg.malkinfn import sample_f

from conftest import circle_spec

BOX = Region.box((-2.0, -2.0), (0.5, 2.0))
BALL2 = Region.ball((0.0, 0.0), 2.0)


def field_of(spec):
    return lambda P: spec.field_batch(P.T).T


def test_region_signed_distance():
    assert BALL2.g(np.array([0.0, 0.0])) == -2.0
    assert BALL2.g(np.array([3.0, 0.0])) == 1.0
    assert BOX.g(np.array([0.5, 0.0])) == 0.0
    assert BOX.g(np.array([0.0, 0.0])) == -0.5
    u = np.linspace(0, 1, 33)
    pts = BOX.boundary_point(u)
    assert np.max(np.abs([BOX.g(p) for p in pts])) < 1e-14


def test_box_contacts(circle):
    rep = cycle_contacts(circle.cycle, BOX)
    phases = sorted(rep.contacts, key=lambda c: c.phase)
    assert len(phases) == 2
    a, b = phases
    assert abs(a.phase - math.pi / 3) < 1e-8 and a.entering
    assert abs(a.theta_exit - 4 * math.pi / 3) <= 1e-8
    assert abs(b.phase - 5 * math.pi / 3) < 1e-8 and not b.entering and b.theta_exit is None


def test_ball_contacts(circle):
    assert cycle_contacts(circle.cycle, BALL2).contacts == ()
    with pytest.raises(GrazingContact):
        cycle_contacts(circle.cycle, Region.ball((0.0, 0.0), 1.0))


def test_brouwer_examples():
    assert brouwer_degree_psi(circle_spec(), BALL2) == 1
    ident = SystemSpec.from_text(["x1", "x2"], ["0", "0"], 1.0)
    minus = SystemSpec.from_text(["-x1", "-x2"], ["0", "0"], 1.0)
    unit = Region.ball((0.0, 0.0), 1.0)
    assert brouwer_degree_psi(ident, unit) == 1
    assert brouwer_degree_psi(minus, unit) == 1
    minus3 = SystemSpec.from_text(["-x1", "-x2", "-x3"], ["0"] * 3, 1.0)
    assert brouwer_degree_psi(minus3, Region.ball((0, 0, 0), 1.0)) == -1


def test_brouwer_counts_signed_zeros():
    # psi = (x1^2 - 1, x2): zeros at x1 = -1 (index -1) and x1 = +1 (index +1)
    spec = SystemSpec.from_text(["x1^2 - 1", "x2"], ["0", "0"], 1.0)
    assert len(find_equilibria(spec, Region.box((-2, -1), (2, 1)))) == 2
    assert brouwer_degree_psi(spec, Region.box((-2, -1), (2, 1))) == 0
    assert brouwer_degree_psi(spec, Region.box((0, -1), (2, 1))) == 1
    assert brouwer_degree_psi(spec, Region.box((-2, -1), (0, 1))) == -1


def test_brouwer_errors():
    spec = SystemSpec.from_text(["x1^2", "x2"], ["0", "0"], 1.0)
    with pytest.raises(DegenerateEquilibrium):
        brouwer_degree_psi(spec, Region.ball((0.0, 0.0), 1.0))
    with pytest.raises(BoundaryZeroOfPsi):
        brouwer_degree_psi(circle_spec(), Region.box((0.0, -1.0), (1.0, 1.0)))
    big = SystemSpec.from_text([f"x{i}" for i in range(1, 6)], ["0"] * 5, 1.0)
    with pytest.raises(DimensionTooLarge):
        brouwer_degree_psi(big, Region.ball((0,) * 5, 1.0))


def test_winding_examples():
    unit = Region.ball((0.0, 0.0), 1.0)
    assert winding_degree(lambda P: P.copy(), unit) == 1
    square = lambda P: np.column_stack([P[:, 0] ** 2 - P[:, 1] ** 2, 2 * P[:, 0] * P[:, 1]])  # noqa: E731
    assert winding_degree(square, unit) == 2
    conj = lambda P: np.column_stack([P[:, 0], -P[:, 1]])  # noqa: E731
    assert winding_degree(conj, unit) == -1
    assert winding_degree(field_of(circle_spec()), BALL2) == 1
    with pytest.raises(ZeroOnBoundary):
        winding_degree(lambda P: P - [1.0, 0.0], unit)


def test_winding_high_degree_needs_refinement():
    unit = Region.ball((0.0, 0.0), 1.0)
    z7 = lambda P: np.column_stack([np.real((P[:, 0] + 1j * P[:, 1]) ** 7), np.imag((P[:, 0] + 1j * P[:, 1]) ** 7)])  # noqa: E731
    assert winding_degree(z7, unit, points=16) == 7


def test_poincare_examples(circle):
    spec_box_neg = circle_spec(("-cos(t)", "-sin(t)"))
    assert poincare_degree(circle.spec, BALL2, 0.0) == 1
    assert poincare_degree(spec_box_neg, BOX, 1e-3) == 2
    assert poincare_degree(circle.spec, BOX, 1e-3) == 0


def test_predicted_degrees(circle, circle_neg):
    assert theorem2_degree(circle.spec, circle.cycle, circle.adj, circle.bf, BALL2).total == 1
    rep = theorem2_degree(circle_neg.spec, circle_neg.cycle, circle_neg.adj, circle_neg.bf, BOX)
    assert rep.total == 2 and rep.d_psi == 1
    entering = [c for c in rep.contributions if c.theta_exit is not None]
    assert len(entering) == 1 and entering[0].interval_degree == -1
    rep = theorem2_degree(circle.spec, circle.cycle, circle.adj, circle.bf, BOX)
    assert rep.total == 0 and [c.interval_degree for c in rep.contributions if c.theta_exit] == [1]


def test_bundled_regions_agree(bundled):
    for name, an in bundled.items():
        region = an.config.region
        d = brouwer_degree_psi(an.spec, region)
        assert d == winding_degree(field_of(an.spec), region), name
        rep = theorem2_degree(an.spec, an.cycle, an.adjoint, an.bf, region)
        assert rep.total == poincare_degree(an.spec, region, 1e-3), name


def test_empty_exit_sets_do_not_matter(circle):
    rep = theorem2_degree(circle.spec, circle.cycle, circle.adj, circle.bf, BOX)
    with_zero_weight = rep.contributions
    assert any(c.theta_exit is None for c in with_zero_weight)
    without = tuple(c for c in with_zero_weight if c.theta_exit is not None)
    assert degree_total(2, rep.d_psi, with_zero_weight) == degree_total(2, rep.d_psi, without) == rep.total
    # even a nonzero weight on an empty exit set is ignored
    fake = Contribution(1.0, 0, None, 5, 1.0, None)
    assert degree_total(2, rep.d_psi, without + (fake,)) == rep.total


def test_empty_sum_reduces_to_psi_degree():
    for n, d in ((2, 1), (2, -1), (3, 1), (3, -2)):
        assert degree_total(n, d, ()) == (-1) ** n * d


def test_beta_sign_enters_formula():
    c = Contribution(0.5, 1, 2.0, 1, -1.0, 1.0)
    assert degree_total(2, 1, (c,)) == 1 + 1
    assert degree_total(2, 1, (Contribution(0.5, 0, 2.0, 1, -1.0, 1.0),)) == 0


def test_hypothesis_violation(circle):
    # the boundary x2 = 0 meets the cycle at phases 0 and pi, zeros of f
    region = Region.box((-2.0, 0.0), (2.0, 2.0))
    with pytest.raises(HypothesisViolation):
        theorem2_degree(circle.spec, circle.cycle, circle.adj, circle.bf, region, d_psi=1)


def test_invariance_under_adjoint_scaling(circle_neg):
    ref = theorem2_degree(circle_neg.spec, circle_neg.cycle, circle_neg.adj, circle_neg.bf, BOX).total
    for k in (-1.0, 7.0):
        adj = circle_neg.adj.scaled(k)
        bf = sample_f(circle_neg.cycle, adj, circle_neg.spec)
        assert theorem2_degree(circle_neg.spec, circle_neg.cycle, adj, bf, BOX).total == ref


def test_boundary_samples_deterministic():
    a = BOX.boundary_samples(64)
    b = BOX.boundary_samples(64)
    assert np.array_equal(a, b)
    assert np.max(np.abs([BOX.g(p) for p in a])) < 1e-14
