import numpy as np
import pytest

from spsident import (
    Dataset,
    InputSpec,
    NoiseSpec,
    ParamVector,
    generate_input,
    generate_noise,
    simulate_arx,
    sps_indicator,
    sps_initialize,
)

# the canonical first-order fixture used across the suite
DEMO_A = -0.7
DEMO_B = 1.0
DEMO_INPUT = InputSpec(kind="ar1", coeff=0.75, variance=1.0, seed=20107)
DEMO_NOISE = NoiseSpec(kind="laplacian", variance=0.1)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile (or load from cache) the jitted kernels once up front so
    per-test timings stay meaningful."""
    system = ParamVector(a=[DEMO_A], b=[DEMO_B])
    ds = make_dataset(system, n=8, noise_seed=1)
    setup = sps_initialize(n=8, seed=1, m=3, q=1)
    sps_indicator(system, ds, setup)
    fir = ParamVector(a=[], b=[0.5, 0.2])
    u, _ = generate_input(DEMO_INPUT, 8)
    y = simulate_arx(fir, u, np.zeros(8))
    ds_fir = Dataset(u=u, y=y, y_init=[], u_init=[0.0, 0.0])
    sps_indicator(fir, ds_fir, setup)
    order2 = ParamVector(a=[-0.4, 0.1], b=[1.0])
    ds2 = make_dataset(order2, n=8, noise_seed=2)
    sps_indicator(order2, ds2, setup)


@pytest.fixture
def demo_system() -> ParamVector:
    return ParamVector(a=[DEMO_A], b=[DEMO_B])


def make_dataset(
    system: ParamVector,
    n: int,
    noise_seed: int,
    noise_spec: NoiseSpec = DEMO_NOISE,
    input_spec: InputSpec = DEMO_INPUT,
) -> Dataset:
    """Simulate the configured system with zero initial conditions."""
    order = system.order
    u, _ = generate_input(input_spec, n)
    noise = generate_noise(noise_spec, n, seed=noise_seed)
    y = simulate_arx(system, u, noise)
    return Dataset(u=u, y=y, y_init=np.zeros(order.n_a), u_init=np.zeros(order.n_b))


@pytest.fixture
def demo_dataset(demo_system) -> Dataset:
    return make_dataset(demo_system, n=40, noise_seed=11)
