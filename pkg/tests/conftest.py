import numpy as np
import pytest

from mmctune.fem import MaterialModel
from mmctune.geometry import Component, DesignDomain


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_domain():
    return DesignDomain(width=2.0, height=1.0)


def random_component(rng, domain=None) -> Component:
    dw = domain.width if domain else 2.0
    dh = domain.height if domain else 1.0
    t = rng.uniform(0.03 * dh, 0.2 * dh, size=3)
    return Component(
        x0=rng.uniform(0.2 * dw, 0.8 * dw),
        y0=rng.uniform(0.2 * dh, 0.8 * dh),
        L=rng.uniform(0.1 * dw, 0.4 * dw),
        t1=t[0],
        t2=t[1],
        t3=t[2],
        theta=rng.uniform(-np.pi, np.pi),
    )
