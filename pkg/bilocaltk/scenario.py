import abc
import logging
import typing
from dataclasses import dataclass

import numpy as np

from bilocaltk.exceptions import UnknownScenario
from bilocaltk.inequalities import (
    ChshConfig,
    IJPair,
    bilocal_parameter,
    chsh,
    ij_for,
    predicted_value,
)
from bilocaltk.measurements import (
    Povm,
    ScenarioName,
    ScenarioSettings,
    bsm_full,
    bsm_noisy,
    bsm_partial,
    counterexample_bob,
    counterexample_scenario,
    effect_min_pt_eigenvalues,
    partial_grouping,
    settings_catalog,
)
from bilocaltk.network import TripartiteDistribution, all_swapped_states, tripartite_distribution
from bilocaltk.qcore import BellState, min_pt_eigenvalue, werner
from bilocaltk.util import ATOL_STATE, ConfigurableMixin, check_range

logger = logging.getLogger(__name__)


class Scenario(ConfigurableMixin, abc.ABC):
    """An abstract base class for the measurement scenarios of the network.

    Implementations must set the :attr:`config_name` attribute, so that the CLI knows which
    ``--scenario`` value corresponds to which implementation, and provide Bob's ideal
    measurement as well as the inversion of the scenario's visibility curve.
    """

    config_name: str
    """The string that maps to the scenario inside configuration files and on the command line."""

    subclasses = []

    def settings(self) -> ScenarioSettings:
        return settings_catalog(self.config_name)

    @abc.abstractmethod
    def ideal_bob(self) -> Povm:
        """Bob's measurement at perfect visibility."""
        pass

    def bob(self, v_b: float = 1.0) -> Povm:
        return bsm_noisy(self.ideal_bob(), v_b)

    @property
    def b_arity(self) -> int:
        return self.ideal_bob().arity

    def ij(self, dist: TripartiteDistribution) -> IJPair:
        return ij_for(dist)

    def predicted(self, v: float) -> float:
        """The headline value (B or CHSH) expected at overall visibility v."""
        return predicted_value(self.config_name, v)

    @abc.abstractmethod
    def visibility_from_value(self, value: float) -> float:
        """Inverts :meth:`predicted`."""
        pass


class Scenario14(Scenario):
    """Full Bell state measurement, four outcomes."""

    config_name = ScenarioName.FOURTEEN.value

    def ideal_bob(self) -> Povm:
        return bsm_full()

    def visibility_from_value(self, value: float) -> float:
        return value**2 / 2


class Scenario13(Scenario):
    """Partial Bell state measurement, three outcomes."""

    config_name = ScenarioName.THIRTEEN.value

    def ideal_bob(self) -> Povm:
        return bsm_partial()

    def visibility_from_value(self, value: float) -> float:
        return 2 * value**2 / 3


class ScenarioChsh(Scenario):
    """Event-ready CHSH test heralded by the full Bell state measurement."""

    config_name = ScenarioName.CHSH.value

    def ideal_bob(self) -> Povm:
        return bsm_full()

    def visibility_from_value(self, value: float) -> float:
        return value / (2 * np.sqrt(2))


def get_scenario(name: str) -> Scenario:
    """Instantiates the scenario registered under *name*.

    :raises: :class:`~bilocaltk.exceptions.UnknownScenario` If no scenario has that name.
    """
    scenarios = Scenario.config_mapping()
    key = name.value if isinstance(name, ScenarioName) else str(name).lower()
    if key not in scenarios:
        raise UnknownScenario(name, scenarios.keys())
    return scenarios[key]()


@dataclass(frozen=True)
class ExactPrediction:
    """Exact-pipeline values for Werner sources and a noisy Bell state measurement."""

    scenario: str
    v_effective: float
    ij: IJPair
    b_value: float
    chsh_value: float
    distribution: TripartiteDistribution

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "v_effective": self.v_effective,
            "I": self.ij.i_value,
            "J": self.ij.j_value,
            "B": self.b_value,
            "CHSH": self.chsh_value,
        }


def exact_prediction(
    scenario: typing.Union[Scenario, str],
    v1: float = 1.0,
    v2: float = 1.0,
    v_b: float = 1.0,
    chsh_config: ChshConfig = ChshConfig(),
) -> ExactPrediction:
    """Runs the exact network with Werner(Φ⁺) sources of visibility v₁, v₂ and Bob's visibility v_b.

    The CHSH value is always evaluated with the CHSH settings on the states heralded by the
    scenario's Bob measurement.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    v1, v2, v_b = (check_range(v, name) for v, name in ((v1, "v1"), (v2, "v2"), (v_b, "v_b")))

    rho1 = werner(BellState.PHI_PLUS, v1)
    rho2 = werner(BellState.PHI_PLUS, v2)
    bob = scenario.bob(v_b)

    dist = tripartite_distribution(rho1, rho2, scenario.settings(), bob)
    ij = scenario.ij(dist)
    chsh_value = chsh(
        all_swapped_states(rho1, rho2, bob), settings_catalog(ScenarioName.CHSH), chsh_config
    )

    logger.debug(
        "Exact %s pipeline at v=%.6f: I=%.6f J=%.6f",
        scenario.config_name,
        v1 * v2 * v_b,
        ij.i_value,
        ij.j_value,
    )
    return ExactPrediction(
        scenario.config_name, v1 * v2 * v_b, ij, bilocal_parameter(ij), chsh_value, dist
    )


@dataclass(frozen=True)
class CounterexampleReport:
    """Inequality values and separability certificates of the separable-measurement construction."""

    ij_14: IJPair
    ij_13: IJPair
    b_14: float
    b_13: float
    conditioned_pt_min: typing.Dict[str, float]
    rho_bc_pt_min: float
    effect_pt_min: typing.Dict[str, float]

    @property
    def separable(self) -> bool:
        """All certificates are non-negative within the state tolerance."""
        values = [self.rho_bc_pt_min, *self.conditioned_pt_min.values(), *self.effect_pt_min.values()]
        return min(values) >= -ATOL_STATE

    def as_dict(self) -> dict:
        return {
            "I14": self.ij_14.i_value,
            "J14": self.ij_14.j_value,
            "I13": self.ij_13.i_value,
            "J13": self.ij_13.j_value,
            "B14": self.b_14,
            "B13": self.b_13,
            "conditioned_pt_min": self.conditioned_pt_min,
            "rho_bc_pt_min": self.rho_bc_pt_min,
            "effect_pt_min": self.effect_pt_min,
            "separable": self.separable,
        }


def counterexample_prediction() -> CounterexampleReport:
    """Runs the separable-measurement construction through the exact pipeline.

    Bob's measurement is separable and ρ_BC is classically correlated, yet both bilocal
    inequalities are violated: B₁₄ = 2^{1/4} and B₁₃ = (√2 + 1)/2^{5/4}.
    """
    setup = counterexample_scenario()
    bob = counterexample_bob()
    bob_13 = partial_grouping(bob)

    ij_14 = ij_for(tripartite_distribution(setup.rho_ab, setup.rho_bc, setup.settings, bob))
    ij_13 = ij_for(tripartite_distribution(setup.rho_ab, setup.rho_bc, setup.settings, bob_13))

    conditioned = {
        pair.herald_label: min_pt_eigenvalue(pair.state)
        for pair in all_swapped_states(setup.rho_ab, setup.rho_bc, bob)
    }
    return CounterexampleReport(
        ij_14=ij_14,
        ij_13=ij_13,
        b_14=bilocal_parameter(ij_14),
        b_13=bilocal_parameter(ij_13),
        conditioned_pt_min=conditioned,
        rho_bc_pt_min=min_pt_eigenvalue(setup.rho_bc),
        effect_pt_min=dict(zip(bob.labels, effect_min_pt_eigenvalues(bob))),
    )
