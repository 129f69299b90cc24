import numpy as np
import pytest

from shootbench.config import default_config
from shootbench.dynamics import RocketParams, initial_state, rocket_ode


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def ode(config):
    return rocket_ode(RocketParams.from_config(config))


@pytest.fixture(scope="session")
def x0(config):
    return initial_state(config)


@pytest.fixture(scope="session")
def hover_u(config):
    """Thrust that roughly cancels gravity at wet mass, tilted slightly."""
    m = config["boundary"]["m_wet"]
    g = np.asarray(config["rocket"]["g_I"], dtype=float)
    u = -m * g
    u[1] += 0.15 * np.linalg.norm(u)
    return u


def admissible_state(rng, config):
    """Random state inside the hard bounds, quaternion normalized."""
    b, c = config["boundary"], config["constraints"]
    x = np.zeros(14)
    x[0] = rng.uniform(c["m_dry"] * 1.05, b["m_wet"])
    x[1] = rng.uniform(0.3, 4.0)
    x[2:4] = rng.uniform(-1.0, 1.0, 2)
    v = rng.normal(size=3)
    x[4:7] = v / np.linalg.norm(v) * rng.uniform(0.1, 0.9 * c["v_max"])
    q = rng.normal(size=4)
    q += np.array([0, 0, 0, 3.0])  # keep it near identity, away from theta_max
    x[7:11] = q / np.linalg.norm(q)
    x[11:14] = rng.uniform(-0.5, 0.5, 3) * c["omega_max"]
    return x


def admissible_control(rng, config):
    c = config["constraints"]
    u_dir = rng.normal(size=3)
    u_dir[0] = abs(u_dir[0]) + 2.0  # mostly along the body axis
    u_dir /= np.linalg.norm(u_dir)
    return u_dir * rng.uniform(1.2 * c["T_min"], 0.9 * c["T_max"])
