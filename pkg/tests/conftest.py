import os
import tempfile

# keep the plane-permutation cache out of the user's home during tests
os.environ.setdefault("SHAPE_ATLAS_CACHE", tempfile.mkdtemp(prefix="shape_atlas_cache_"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from shape_atlas.geom import PointCloud  # noqa: E402


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_cloud(n, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3))
    pts *= scale / np.linalg.norm(pts, axis=1).max()
    return PointCloud(pts, unit(rng.normal(size=(n, 3))))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report one line each, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
