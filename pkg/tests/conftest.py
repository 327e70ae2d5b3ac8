import numpy as np
import pytest

from placekit.bench.generators import generate_object, generate_scene
from placekit.geometry import PointCloud

ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Remember one acceptance outcome for the end-of-run summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line("criterion %d: %s  %s" % (k, "PASS" if ok else "FAIL", detail))


def slab(size=0.3, step=0.005, z=0.0, colors=False):
    g = np.arange(-size / 2, size / 2 + 1e-12, step)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)])
    cols = np.tile([0.5, 0.5, 0.5], (len(pts), 1)) if colors else None
    return PointCloud(pts, cols)


def box_cloud(sx=0.06, sy=0.04, sz=0.03, step=0.005, z0=0.0):
    """Surface samples of an axis-aligned box resting on z = z0."""
    xs = np.arange(-sx / 2, sx / 2 + 1e-12, step)
    ys = np.arange(-sy / 2, sy / 2 + 1e-12, step)
    zs = np.arange(0.0, sz + 1e-12, step)
    pts = set()
    for x in xs:
        for y in ys:
            pts.add((x, y, z0))
            pts.add((x, y, z0 + sz))
    for z in zs:
        for x in xs:
            pts.add((x, -sy / 2, z0 + z))
            pts.add((x, sy / 2, z0 + z))
        for y in ys:
            pts.add((-sx / 2, y, z0 + z))
            pts.add((sx / 2, y, z0 + z))
    return PointCloud(np.array(sorted(pts)))


@pytest.fixture(scope="session")
def plate():
    return generate_object("plate", seed=0)


@pytest.fixture(scope="session")
def mug():
    return generate_object("mug", seed=0)


@pytest.fixture(scope="session")
def rack():
    return generate_scene("dish_rack", seed=0)


@pytest.fixture(scope="session")
def table():
    return generate_scene("flat_table", seed=0)


@pytest.fixture(scope="session")
def vocab_small():
    from placekit.fpfh import BowVocabulary

    clouds = [generate_object(k, seed=0) for k in ("plate", "mug", "box", "bowl")]
    return BowVocabulary(n_words=100, seed=0).fit(clouds)
