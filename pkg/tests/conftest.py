import numpy as np
import pytest

from yeefem.mesh import Mesh, ScattererGeometry, generate_scatterer_mesh, refine_uniform
from yeefem.scenario import Scenario


def square_mesh(n=4, labels=False):
    """Structured mesh of the unit square, each cell split along a diagonal."""
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            if (i + j) % 2:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    tris = np.array(tris)
    lab = None
    if labels:
        cen = pts[tris].mean(axis=1)
        lab = (cen[:, 0] > 0.5).astype(int)
    return Mesh.from_arrays(pts, tris, lab)


def random_triangles(rng, n):
    """``n`` random counterclockwise triangles with areas bounded away from zero."""
    out = []
    while len(out) < n:
        p = rng.uniform(-1, 1, size=(3, 2))
        d1, d2 = p[1] - p[0], p[2] - p[0]
        a = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
        if abs(a) < 0.05:
            continue
        out.append(p if a > 0 else p[[0, 2, 1]])
    return np.array(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario():
    return Scenario()


@pytest.fixture(scope="session")
def scatterer_meshes():
    m = generate_scatterer_mesh(ScattererGeometry(), 0)
    out = [m]
    for _ in range(3):
        out.append(refine_uniform(out[-1]))
    return out


@pytest.fixture
def unit_square():
    return square_mesh(4)


@pytest.fixture
def reference_triangle():
    return Mesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])


# --------------------------------------------------------------------------
# acceptance report: one line per criterion in the terminal summary

ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance(request):
    """``record(number, title, clauses)`` with ``clauses = [(name, ok, detail), ...]``."""
    results = request.config.stash[ACCEPTANCE_KEY]

    def record(number, title, clauses):
        ok = all(c[1] for c in clauses)
        parts = [f"{name}: {'ok' if good else 'FAILED'} ({detail})" for name, good, detail in clauses]
        line = f"acceptance {number} [{title}] {'PASS' if ok else 'FAIL'} | " + " | ".join(parts)
        results[number] = line
        print(line)
        return ok, "; ".join(f"{n}: {d}" for n, g, d in clauses if not g)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
