import numpy as np
import pytest

from csflow.mixture import MixtureModel, SpeciesData, nitrogen_like


@pytest.fixture
def n2_model():
    return MixtureModel(species=(nitrogen_like(),), Pr=0.72, Sc=0.7)


@pytest.fixture
def binary_model():
    """Two-species mixture with distinct molar masses and heats."""
    a = SpeciesData(name="A", M=0.028, cp=1039.0, hf=0.0, Tref=0.0,
                    mu_ref=1.663e-5, T_mu=273.15, S_mu=107.0)
    b = SpeciesData(name="B", M=0.032, cp=918.0, hf=2.5e5, Tref=298.15,
                    mu_ref=1.919e-5, T_mu=273.15, S_mu=139.0)
    return MixtureModel(species=(a, b), Pr=0.72, Sc=0.7)


@pytest.fixture
def air5_model():
    """Five-species air-like mixture (inert data, no rate constants)."""
    mk = lambda name, M, cp, hf: SpeciesData(
        name=name, M=M, cp=cp, hf=hf, Tref=298.15,
        mu_ref=1.7e-5, T_mu=273.15, S_mu=110.0)
    return MixtureModel(species=(
        mk("N2", 0.0280134, 1039.0, 0.0),
        mk("O2", 0.0319988, 918.0, 0.0),
        mk("NO", 0.0300061, 995.0, 3.0e6),
        mk("N", 0.0140067, 1484.0, 3.36e7),
        mk("O", 0.0159994, 1300.0, 1.54e7),
    ), Pr=0.72, Sc=0.7)


def random_primitive(rng, model, with_velocity=True):
    """Random admissible primitive state for property tests."""
    from csflow.mixture import make_primitive

    Y = rng.dirichlet(np.ones(model.ns))
    u = rng.uniform(-500.0, 500.0, size=3) if with_velocity else np.zeros(3)
    return make_primitive(model, rho=rng.uniform(0.05, 5.0), u=u,
                          T=rng.uniform(150.0, 3000.0), Y=Y)
