import numpy as np
import pytest

from credalmarket.credal import CredalSet
from credalmarket.evidence import Categorical, EvidenceSpace
from credalmarket.licenses import MechanismParams


@pytest.fixture
def space3() -> EvidenceSpace:
    return EvidenceSpace.of_size(3)


@pytest.fixture
def space2() -> EvidenceSpace:
    return EvidenceSpace.of_size(2)


@pytest.fixture
def simplex_points(space3):
    """The three prohibited distributions of the toy gaming instance."""
    return [
        Categorical(space3, [0.35, 0.35, 0.30]),
        Categorical(space3, [0.35, 0.30, 0.35]),
        Categorical(space3, [0.30, 0.35, 0.35]),
    ]


@pytest.fixture
def simplex_hull(space3, simplex_points) -> CredalSet:
    return CredalSet(space3, tuple(simplex_points))


@pytest.fixture
def uniform3(space3) -> Categorical:
    return Categorical.uniform(space3)


@pytest.fixture
def params_small() -> MechanismParams:
    return MechanismParams(C=0.5, R=1.0)


def random_categorical(rng: np.random.Generator, space: EvidenceSpace) -> Categorical:
    return Categorical(space, rng.dirichlet(np.ones(space.size)))


def random_credal(rng: np.random.Generator, space: EvidenceSpace, k: int) -> CredalSet:
    return CredalSet(space, tuple(random_categorical(rng, space) for _ in range(k)))
