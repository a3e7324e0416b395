import numpy as np
import pytest

from legcontact.dynamics import BaseMode, table1_model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[BaseMode.FIXED, BaseMode.FLOATING_XZ, BaseMode.VIRTUAL_FT], ids=lambda m: m.value)
def any_model(request):
    return table1_model(request.param)


def random_state(model, rng, size=None, speed=3.0):
    shape = (model.dof,) if size is None else (size, model.dof)
    q = rng.uniform(-np.pi, np.pi, shape)
    if model.n_base:
        q[..., : model.n_base] = rng.uniform(-0.05, 0.05, shape[:-1] + (model.n_base,))
    qdot = rng.uniform(-speed, speed, shape)
    return q, qdot
