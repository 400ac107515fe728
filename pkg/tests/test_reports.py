import numpy as np

from mpflex.services import reports
from mpflex.services.market import recover_gne, solve_central


def test_fmt_has_four_decimals_and_no_negative_zero():
    assert reports.fmt(1.0) == "1.0000"
    assert reports.fmt(-2.34567) == "-2.3457"
    assert reports.fmt(-0.00001) == "0.0000"


def test_linear_terms_carry_their_signs():
    assert reports._affine(1.5, np.array([2.0, -0.25]), ["a", "b"]) == "1.5000 + 2.0000*a - 0.2500*b"


def test_equilibrium_text_lists_users_and_lines(five_bus_instance):
    equilibrium = recover_gne(solve_central(five_bus_instance, [-10.0, -20.0]), five_bus_instance)
    text = reports.equilibrium_text(five_bus_instance, equilibrium, rounds=7)

    assert "best-response rounds: 7" in text
    assert "cost (linearized)" not in text
    assert text.endswith("\n")
    for user in five_bus_instance.users:
        assert user.name in text
    assert "line flows" in text
    assert "-200.0000" in text
