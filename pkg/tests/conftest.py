import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from inelastic_ks.restitution import Constant, Elastic, MonotoneDecreasing, Viscoelastic

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

MODELS = {
    "elastic": Elastic(),
    "constant0.5": Constant(0.5),
    "monotone": MonotoneDecreasing(1.0, 1.0),
    "visco0.5": Viscoelastic(0.5),
}


@pytest.fixture(params=sorted(MODELS), ids=sorted(MODELS))
def model(request):
    return MODELS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
