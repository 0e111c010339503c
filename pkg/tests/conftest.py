import numpy as np
import pytest

from globalhash.dataio import make_synthetic
from globalhash.embedding import embed, fit_pca


@pytest.fixture
def rng():
    return np.random.default_rng(20)


@pytest.fixture(scope="session")
def clusters():
    return make_synthetic("gaussian_clusters", n=1500, d=24, k_clusters=6, seed=11)


@pytest.fixture(scope="session")
def embedded_clusters(clusters):
    data, _ = clusters
    return embed(fit_pca(data, 7), data)


@pytest.fixture(scope="session")
def ball_points():
    points, _ = make_synthetic("uniform_ball", n=2000, d=8, seed=4)
    return points


@pytest.fixture(autouse=True)
def single_thread_default(monkeypatch):
    monkeypatch.delenv("GHS_THREADS", raising=False)
