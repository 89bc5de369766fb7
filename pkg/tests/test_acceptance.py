"""Acceptance criteria 1-10; each test prints one pass/fail line, even under capture."""

from rdslimit.harness import acceptance


def _check(fn, capsys):
    crit = fn()
    with capsys.disabled():
        print("\n" + crit.line())
    assert crit.passed, crit.line()


def test_criterion_01_analytic_invariants(capsys):
    _check(acceptance.analytic_invariants, capsys)


def test_criterion_02_karamata(capsys):
    _check(acceptance.karamata, capsys)


def test_criterion_03_exponential_law(capsys):
    _check(acceptance.exponential_law, capsys)


def test_criterion_04_poisson_law(capsys):
    _check(acceptance.poisson_law, capsys)


def test_criterion_05_quenched_stable(capsys):
    _check(acceptance.quenched_stable, capsys)


def test_criterion_06_functional_marginals(capsys):
    _check(acceptance.functional_marginals, capsys)


def test_criterion_07_intermittent(capsys):
    _check(acceptance.intermittent, capsys)


def test_criterion_08_annealed(capsys):
    _check(acceptance.annealed, capsys)


def test_criterion_09_transfer_diagnostics(capsys):
    _check(acceptance.transfer_diagnostics, capsys)


def test_criterion_10_determinism(capsys):
    _check(acceptance.determinism, capsys)
