import random

import pytest
from hypothesis import strategies as st

from tsnproxy.engine import GCConfig, HostPath, Scenario, Talker
from tsnproxy.packet import BufferPool, NamespaceId
from tsnproxy.proxy import KeyStrategy
from tsnproxy.taprio import GateControlList, GateWindow

US = 1_000
MS = 1_000_000
S = 1_000_000_000


@pytest.fixture
def pool():
    return BufferPool()


@pytest.fixture
def pod1():
    return NamespaceId("pod1")


def random_gcl(rng: random.Random, priorities=(0, 1, 2, 3)) -> GateControlList:
    """A tiling GCL with 1-5 windows; priority 0 always has a window."""
    cycle = rng.randrange(10, 200) * US
    n = rng.randint(1, 5)
    cuts = sorted(rng.sample(range(1, cycle // US), min(n - 1, cycle // US - 1)))
    bounds = [0] + [c * US for c in cuts] + [cycle]
    windows = []
    for lo, hi in zip(bounds, bounds[1:]):
        k = rng.randint(1, len(priorities))
        windows.append(GateWindow(lo, hi, frozenset(rng.sample(priorities, k))))
    if not any(0 in w.open_priorities for w in windows):
        w = rng.choice(windows)
        windows[windows.index(w)] = GateWindow(w.start_offset, w.end_offset,
                                               w.open_priorities | {0})
    return GateControlList(cycle, tuple(windows), base_time=rng.randrange(0, 5) * US)


@st.composite
def gcls(draw, max_windows=5, priorities=(0, 1, 2, 3, 7)):
    cycle = draw(st.integers(min_value=2, max_value=400))
    n = draw(st.integers(min_value=1, max_value=min(max_windows, cycle)))
    cuts = sorted(draw(st.sets(st.integers(min_value=1, max_value=cycle - 1),
                               min_size=n - 1, max_size=n - 1))) if n > 1 else []
    bounds = [0] + cuts + [cycle]
    windows = []
    for lo, hi in zip(bounds, bounds[1:]):
        prios = draw(st.frozensets(st.sampled_from(priorities), min_size=1))
        windows.append(GateWindow(lo, hi, prios))
    if not any(0 in w.open_priorities for w in windows):
        i = draw(st.integers(min_value=0, max_value=len(windows) - 1))
        w = windows[i]
        windows[i] = GateWindow(w.start_offset, w.end_offset, w.open_priorities | {0})
    base = draw(st.integers(min_value=0, max_value=1000))
    return GateControlList(cycle, tuple(windows), base_time=base)


def random_scenario(rng: random.Random, **overrides) -> Scenario:
    gcl = random_gcl(rng)
    talkers = []
    for i in range(rng.randint(1, 3)):
        talkers.append(Talker(
            pod=f"talker{i}",
            priority=rng.choice([0, 1, 2, 3, 5]),
            period=rng.randrange(3, 60) * US + rng.randrange(0, 1000),
            listener=f"listener{i}",
            start_offset=rng.randrange(0, 50) * US,
            payload_size=rng.choice([0, 64, 256, 1500]),
        ))
    params = dict(
        duration=rng.randrange(1, 4) * MS,
        talkers=tuple(talkers),
        gcl=gcl,
        seed=rng.getrandbits(64),
        proxy_enabled=True,
        host_path=HostPath(
            clone_probability=rng.random(),
            drop_probability=rng.random() * 0.5,
            forward_delay=rng.randrange(0, 5) * US,
        ),
        gc=GCConfig(interval=rng.randrange(1, 4) * 100 * US, max_age=rng.randrange(1, 4) * 200 * US),
        strategy=rng.choice(list(KeyStrategy)),
        serialization=rng.choice([0, 0, 500, 1200]),
    )
    params.update(overrides)
    return Scenario(**params)


# Filled by test_acceptance; echoed once at the end of the session.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)
