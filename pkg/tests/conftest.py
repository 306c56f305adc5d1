import csv

import numpy as np
import pytest

from tsneseg.dataset import Dataset
from tsneseg.dbscan import DbscanConfig
from tsneseg.forest import ForestConfig
from tsneseg.pipeline import PipelineConfig
from tsneseg.tsne import TsneConfig

IRIS_NAMES = ("sepal length (cm)", "sepal width (cm)", "petal length (cm)", "petal width (cm)")

FAST_TSNE = TsneConfig(n_iterations=300, early_exaggeration_iters=100, late_exaggeration_start=300,
                       momentum_switch_iter=100, perplexity=10.0)


def fast_config(c=0.1, trees=10, **kw) -> PipelineConfig:
    return PipelineConfig(tsne=FAST_TSNE, dbscan=DbscanConfig(epsilon_constant=c, **kw),
                          forest=ForestConfig(n_trees=trees))


def make_blobs(sizes, n_features, separation, seed=0, sigma=1.0, rotate=False):
    """Gaussian blobs whose centers are pairwise ``separation * sigma`` apart (scaled simplex).

    With ``rotate`` the simplex is turned by a random orthogonal matrix, so the
    separation is spread over every column instead of the first ``len(sizes)``.
    """
    rng = np.random.default_rng(seed)
    k = len(sizes)
    if k > n_features:
        raise ValueError("need at least one dimension per blob")
    centers = np.zeros((k, n_features))
    centers[np.arange(k), np.arange(k)] = separation * sigma / np.sqrt(2.0)
    if rotate:
        q, r = np.linalg.qr(rng.normal(size=(n_features, n_features)))
        centers = centers @ (q * np.sign(np.diag(r)))
    x = np.vstack([rng.normal(centers[i], sigma, size=(s, n_features)) for i, s in enumerate(sizes)])
    y = np.repeat(np.arange(k), sizes)
    return x, y


@pytest.fixture(scope="session")
def iris():
    from sklearn.datasets import load_iris

    return Dataset(load_iris().data, IRIS_NAMES)


@pytest.fixture(scope="session")
def iris_csv(tmp_path_factory, iris):
    path = tmp_path_factory.mktemp("data") / "iris.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(iris.feature_names)
        for row in iris.values:
            w.writerow([repr(float(v)) for v in row])
    return path


# acceptance outcomes, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
