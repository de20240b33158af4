import numpy as np
import pytest

from pcdsse.cost import CostSnapshot
from pcdsse.netmodel import encode_complex, load_network

SLACK = np.exp(-2j * np.pi / 3 * np.arange(3))


def two_bus_feeder(z=0.1):
    """Single-phase line from the slack to node 1 carrying a wye load."""
    feeder = {
        "name": "two_bus",
        "slack": encode_complex(SLACK),
        "nodes": [{"id": 1, "phases": "a"}],
        "lines": [{"from": 0, "to": 1, "phases": "a", "z": [[encode_complex(z)]]}],
        "loads": [{"node": 1, "phases": "a", "connection": "wye"}],
    }
    return feeder


def random_feeder(rng, n_nodes=4, delta_nodes=(2,)):
    """Radial three-phase chain with random coupled impedances."""
    nodes = [{"id": i, "phases": "abc"} for i in range(n_nodes + 1)]
    lines = []
    for i in range(1, n_nodes + 1):
        parent = int(rng.integers(0, i))
        zs = complex(rng.uniform(0.005, 0.02), rng.uniform(0.01, 0.04))
        zm = complex(rng.uniform(0.001, 0.004), rng.uniform(0.003, 0.01))
        z = np.full((3, 3), zm) + np.eye(3) * (zs - zm)
        lines.append({"from": parent, "to": i, "z": encode_complex(z)})
    loads = []
    for i in range(1, n_nodes + 1):
        conn = "delta" if i in delta_nodes else "wye"
        loads.append({"node": i, "phases": "abc", "connection": conn})
    return {"name": "random", "slack": encode_complex(SLACK), "nodes": nodes,
            "lines": lines, "loads": loads}


def random_snapshot(rng, n=6, m=8, n_metered=3, wv=2.0, delta=0.3, a=0.5, prior=True):
    """Objective with random data, metered rows and prior."""
    G = rng.standard_normal((m, n))
    rows = np.sort(rng.choice(n, n_metered, replace=False))
    return CostSnapshot(
        G_v=G, m_v=rng.standard_normal(m), y_v=rng.standard_normal(m),
        u_rows=rows, y_u=rng.standard_normal(n_metered), n=n, wv=wv, delta=delta, a=a,
        u_prior=rng.standard_normal(n) if prior else None)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def net4():
    return load_network("bundled:feeder4")


@pytest.fixture(scope="session")
def net12():
    return load_network("bundled:feeder12")
