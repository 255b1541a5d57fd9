import numpy as np
import pytest

from rnne.graphs import GraphSnapshot
from rnne.pretreatment import TrainingWindow


def random_snapshot(n, time_index=0, density=0.3, seed=0, weighted=False):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < density, k=1).astype(float)
    if weighted:
        upper *= rng.integers(1, 4, (n, n))
    adj = upper + upper.T
    ids = tuple(f"v{i}" for i in range(n))
    return GraphSnapshot(time_index, ids, adj)


def build_window(n_slots=8, d=3, n=3, seed=1, density=0.35, identical=False,
                 all_normal=True):
    win = TrainingWindow(capacity=n, n_slots=n_slots, embedding_dim=d)
    for k in range(n):
        snap = random_snapshot(n_slots, time_index=k, density=density,
                               seed=seed if identical else seed + k,
                               weighted=True)
        win.push(snap)
    if all_normal:
        for e in win.entries:
            e.states[:] = 0
    return win


@pytest.fixture
def toy_window():
    return build_window()
