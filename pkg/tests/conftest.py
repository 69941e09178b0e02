import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# a full pipeline in a few seconds: every controller, tiny budgets
TINY_CFG = """
[trainer]
episodes = 3
steps_per_episode = 40
warmup = 40
[lstm]
dataset_size = 400
epochs = 2
window = 20
[harness]
N = 40
train_params = {"offset": 25.0, "amp": 25.0, "freq": 0.05, "phase": -1.5707963267948966}
"""


@pytest.fixture
def tiny_cfg_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CFG)
    return path


# ---- shared default-scale benchmark

BENCH_SEEDS = (0, 1, 2)
_BENCH = {}


@pytest.fixture(scope="session")
def benchmark():
    """Full default comparison for each seed, computed once per session.

    Returns ``{"results": {seed: ComparisonResult}, "seconds": wall_time}``.
    """
    if not _BENCH:
        import time
        from memctrl.config import default_config
        from memctrl.experiment import run_comparison
        jobs = max(1, os.cpu_count() or 1)
        t0 = time.perf_counter()
        results = {s: run_comparison(default_config().with_seed(s), jobs=jobs) for s in BENCH_SEEDS}
        _BENCH.update(results=results, seconds=time.perf_counter() - t0)
    return _BENCH


# ---- one pass/fail line per acceptance criterion

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.addinivalue_line("markers", "slow: needs the full default-scale benchmark")


@pytest.fixture
def detail(request):
    """Free-text notes a criterion test attaches to its summary line."""
    notes = []
    request.node.criterion_notes = notes
    return notes


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n = mark.args[0]
    prev = _CRITERIA.get(n, (True, []))
    notes = prev[1] + list(getattr(item, "criterion_notes", []))
    _CRITERIA[n] = (prev[0] and rep.passed, notes)


def pytest_terminal_summary(terminalreporter):
    if _BENCH:
        res = _BENCH["results"]
        terminalreporter.section("benchmark: average tracking error (deg) on the test reference")
        names = list(next(iter(res.values())).traces)
        names += list(next(iter(res.values())).baseline_traces)
        terminalreporter.write_line(f"{'controller':15s}" + "".join(f"  seed {s:<6d}" for s in res))
        for n in names:
            errs = [r.traces[n] if n in r.traces else r.baseline_traces[n] for r in res.values()]
            terminalreporter.write_line(
                f"{n:15s}" + "".join(f"  {np.mean(np.abs(t.error)):<11.4f}" for t in errs))
        terminalreporter.write_line("episodes to 90% of plateau: " + "; ".join(
            f"seed {s} " + " ".join(f"{k}={v}" for k, v in r.plateau.items()) for s, r in res.items()))
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, notes = _CRITERIA[n]
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}"
        if notes:
            line += "  | " + "; ".join(notes)
        terminalreporter.write_line(line)
