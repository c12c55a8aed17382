import numpy as np
import pytest

from abdkit.phantom import PhantomSpec, generate


@pytest.fixture(scope="session")
def fine_phantom():
    """A 12-slice fine-grid phantom with exact analytic masks."""
    spec = PhantomSpec(dims=(12, 96, 96), spacing=(5.0, 1.5, 1.5),
                       abdomen_start=3, abdomen_end=9, seed=4)
    volume, label, masks = generate(spec)
    return spec, volume, label, np.stack(masks)


@pytest.fixture(scope="session")
def noisy_phantom():
    spec = PhantomSpec(dims=(12, 96, 96), spacing=(5.0, 1.5, 1.5),
                       abdomen_start=3, abdomen_end=9, seed=4,
                       noise_sigma_hu=20.0)
    volume, label, masks = generate(spec)
    return spec, volume, label, np.stack(masks)
