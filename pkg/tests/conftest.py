import numpy as np
import pytest

from app.models.mdp import Mdp
from app.models.schemas import parse_scenario
from app.services.storage_service import StorageService
from app.utils.scenarios import build_scenario

COPS_DOC = {
    "kind": "cops",
    "grid": {"w": 8, "h": 8},
    "start": [0, 7],
    "goals": [[5, 4], [6, 5], [4, 3]],
    "true_goal": 0,
    "p": 0.1,
}

CAMO_DOC = {
    "kind": "camo",
    "grid": {"w": 5, "h": 5},
    "start": [0, 0],
    "tg": [1, 2],
    "p": 0.1,
    "r": 1,
    "c": 5,
}


def cops_variant(**update):
    return build_scenario(parse_scenario({**COPS_DOC, **update}))


def camo_variant(**update):
    return build_scenario(parse_scenario({**CAMO_DOC, **update}))


def random_mdp(rng: np.random.Generator, state_count: int, action_count: int) -> Mdp:
    rows = {
        (s, a): list(enumerate(rng.dirichlet(np.ones(state_count))))
        for s in range(state_count)
        for a in range(action_count)
    }
    return Mdp.from_rows(state_count, action_count, rows, rng.standard_normal((state_count, action_count)))


@pytest.fixture
def line_mdp():
    """
    Two states. State 0: action 0 stays (reward 0), action 1 moves to state 1
    (reward 0). State 1: action 0 stays (reward 1), action 1 moves back (reward 0).
    """
    rows = {
        (0, 0): [(0, 1.0)],
        (0, 1): [(1, 1.0)],
        (1, 0): [(1, 1.0)],
        (1, 1): [(0, 1.0)],
    }
    rewards = np.array([[0.0, 0.0], [1.0, 0.0]])
    return Mdp.from_rows(2, 2, rows, rewards)


@pytest.fixture(scope="session")
def cops_bundle():
    return cops_variant()


@pytest.fixture(scope="session")
def camo_bundle():
    return camo_variant()


@pytest.fixture(scope="session")
def cops_product(cops_bundle):
    return cops_bundle.product()


@pytest.fixture
def storage(tmp_path, monkeypatch):
    service = StorageService()
    monkeypatch.setattr(service, "cache_dir", tmp_path / "cache")
    return service
