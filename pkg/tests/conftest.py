import pytest

from fabkit.emulator import AckDelay, EmulatorConfig, VirtualPrinter
from fabkit.link import LinkConfig, LoopbackTransport, Session
from fabkit.profiles import ENDER3


@pytest.fixture
def ender3():
    return ENDER3


def make_emulator(**overrides) -> VirtualPrinter:
    config = EmulatorConfig(**overrides)
    return VirtualPrinter(config)


def make_session(emulator=None, *, profile=ENDER3, **link_overrides) -> Session:
    """Connected session against a fresh virtual printer (fast test timeouts)."""
    emulator = emulator or make_emulator()
    defaults = dict(
        command_timeout_s=5.0,
        handshake_timeout_s=2.0,
        banner_quiet_s=0.02,
        auto_poll=False,
    )
    defaults.update(link_overrides)
    session = Session(LoopbackTransport(emulator), profile, LinkConfig(**defaults))
    session.connect()
    return session


@pytest.fixture
def emulator():
    return make_emulator()


@pytest.fixture
def session(emulator):
    s = make_session(emulator)
    yield s
    s.close()


def jittery_emulator(seed: int, lo_ms: float = 0.05, hi_ms: float = 0.8, **overrides) -> VirtualPrinter:
    """Emulator whose responses arrive after a seeded random wall delay."""
    return make_emulator(
        ack_delay=AckDelay(kind="randomized", range_ms=(lo_ms, hi_ms), seed=seed),
        **overrides,
    )
