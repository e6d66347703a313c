import time

import numpy as np
import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_run():
    """One training run on the toy diagonal pattern with the demo settings, timed."""

    from convae.cli import TOY_DEFAULTS
    from convae.models import ModelConfig, forward, make_toy_pattern, train

    config = ModelConfig(**TOY_DEFAULTS)
    pattern = make_toy_pattern(config.bins, 350, 70, seed=config.seed)
    start = time.perf_counter()
    params, report = train(config, [pattern])
    elapsed = time.perf_counter() - start
    xhat, h = forward(params, config, pattern)
    return {"config": config, "pattern": pattern, "params": params, "report": report,
            "xhat": xhat, "h": h, "seconds": elapsed}
