import pytest

from gerryopt import lp as lpmod
from gerryopt.model import uniform_instance


@pytest.fixture(scope="session")
def solve_cached():
    """Session-wide cache of LP solutions on the standard 201-point instance."""
    cache = {}

    def get(gamma: float):
        key = float(gamma)
        if key not in cache:
            inst = uniform_instance(gamma=key)
            cache[key] = (inst, lpmod.solve_lp(lpmod.build_lp(inst)))
        return cache[key]

    return get
