import numpy as np
import pytest

from splatforge.scene import GaussianCloud, make_camera, normalize_quaternions
from splatforge.sorting import warm_up
from splatforge.synthetic import default_camera, gen_synthetic


@pytest.fixture(scope="session", autouse=True)
def _jit_warm_up():
    warm_up()


def random_cloud(n: int, seed: int = 0, sh_degree: int = 3, span: float = 5.0) -> GaussianCloud:
    """Unstructured random cloud, including points behind typical cameras."""
    rng = np.random.default_rng(seed)
    basis = (sh_degree + 1) ** 2
    return GaussianCloud(
        means=rng.uniform(-span, span, (n, 3)),
        scales=np.log(rng.uniform(0.005, 0.08, (n, 3))),
        rotations=normalize_quaternions(rng.normal(size=(n, 4))),
        opacities=rng.uniform(0.05, 0.95, n),
        sh=rng.normal(0.0, 0.3, (n, 3, basis)),
    )


@pytest.fixture
def small_cloud() -> GaussianCloud:
    return gen_synthetic("sphere", 200, seed=11)


@pytest.fixture
def small_camera():
    return default_camera(width=128, height=96)


@pytest.fixture
def camera():
    return default_camera()
