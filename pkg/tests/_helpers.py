"""Shared fixtures builders for the test suite."""
import numpy as np

from evdn.core import EventPacket, SensorGeometry


def random_packet(rng, n=None, width=None, height=None, t_span=None, max_n=2000):
    """Random valid packet: sorted timestamps with ties, both polarities."""
    width = int(width or rng.integers(1, 64))
    height = int(height or rng.integers(1, 48))
    n = int(rng.integers(0, max_n + 1) if n is None else n)
    t_span = int(t_span or rng.integers(1, 200_000))
    t = np.sort(rng.integers(0, t_span, n))
    x = rng.integers(0, width, n)
    y = rng.integers(0, height, n)
    p = rng.choice(np.array([-1, 1]), n)
    return EventPacket(SensorGeometry(width, height), t, x, y, p)


def packet_from_rows(width, height, rows):
    """Packet from (t, x, y, p) tuples, in the given order."""
    rows = list(rows)
    if not rows:
        return EventPacket.empty(SensorGeometry(width, height))
    t, x, y, p = zip(*rows)
    return EventPacket(SensorGeometry(width, height), t, x, y, p)
