import pytest

from fracpme.grid import Grid, normalize
from fracpme.harness import fuzz_corpus
from fracpme.steady import barenblatt

S_DEFAULT = 0.25
LAM_DEFAULT = 0.4


@pytest.fixture(scope="session")
def grid1024():
    return Grid.symmetric(4.0, 1024)


@pytest.fixture(scope="session")
def grid4096():
    return Grid.symmetric(4.0, 4096)


@pytest.fixture(scope="session")
def steady_pair(grid1024):
    """Unit-mass steady profile and its normalized sampling on the fuzz grid."""
    prof, dens = barenblatt(S_DEFAULT, LAM_DEFAULT, mass=1.0, grid=grid1024)
    return prof, normalize(dens)


@pytest.fixture(scope="session")
def minimizer_target(grid1024):
    """Discrete obstacle-problem minimizer: the target whose variational
    residual is at round-off, used by the tight inequality checks."""
    from fracpme.steady import discrete_minimizer

    return normalize(discrete_minimizer(S_DEFAULT, LAM_DEFAULT, grid1024))


@pytest.fixture(scope="session")
def corpus40(grid1024):
    """First 40 members of the seeded fuzz corpus (seed 42)."""
    return list(fuzz_corpus(42, 40, grid1024))
