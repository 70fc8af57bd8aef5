import pytest

from actionibvp.wave import WaveConfig, WaveOperators, solve_wave


@pytest.fixture(scope="session")
def bump_run():
    """Converged 30x24 bump run with the default configuration."""
    cfg = WaveConfig()
    return solve_wave(cfg), WaveOperators(cfg)


@pytest.fixture(scope="session")
def vacuum_run():
    cfg = WaveConfig(n_tau=10, n_sigma=8, bump_amplitude=0.0)
    return solve_wave(cfg)


@pytest.fixture(scope="session")
def fine_run():
    """Converged 60x48 run at T = 1e4."""
    return solve_wave(WaveConfig(n_tau=60, n_sigma=48))


_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion and assert it."""

    def record(tag: str, checks: dict[str, tuple[bool, str]]) -> None:
        ok = all(passed for passed, _ in checks.values())
        detail = "; ".join(f"{name}={value}{'' if passed else ' (x)'}" for name, (passed, value) in checks.items())
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE[tag] = line
        print(line)
        failed = [name for name, (passed, _) in checks.items() if not passed]
        assert ok, f"{tag} failed checks: {failed}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for tag in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[tag])
