"""Correlators, the bilocal parameters I, J, B and the event-ready CHSH value.

The array helpers accept tables with arbitrary leading batch axes, shaped
``(..., x, z, a, b, c)``, so the sampler can evaluate bootstrap replicas in one call.
"""
import itertools
import logging
import typing
from dataclasses import dataclass

import numpy as np

from bilocaltk.exceptions import ArityError, HeraldNeverFires, InvalidPovmError, InvalidStateError
from bilocaltk.measurements import BELL_LABELS, GROUPED_LABEL, ScenarioName, ScenarioSettings, scenario_name
from bilocaltk.network import (
    ConditionedPair,
    TripartiteDistribution,
    conditional_ac_distribution,
)
from bilocaltk.util import ATOL_CLAMP, ATOL_DERIVED, check_range

logger = logging.getLogger(__name__)

_PARITY = np.array([[1.0, -1.0], [-1.0, 1.0]])
"""(−1)^{u+w} for u, w ∈ {0, 1}; used for (a, c) as well as for (x, z)."""

DEFAULT_HERALD = "01"
DEFAULT_SIGNS = (1, 1, -1, 1)


@dataclass(frozen=True)
class IJPair:
    """The two linear combinations entering the bilocal inequality √|I| + √|J| ≤ 1."""

    i_value: float
    j_value: float
    scenario: str

    def __post_init__(self):
        for name in ("i_value", "j_value"):
            if abs(getattr(self, name)) > 1 + ATOL_DERIVED:
                raise InvalidStateError(f"{name} = {getattr(self, name)} exceeds 1 in magnitude")


@dataclass(frozen=True)
class ChshConfig:
    """Which herald to condition on and the signs applied to ⟨A₀C₀⟩, ⟨A₀C₁⟩, ⟨A₁C₀⟩, ⟨A₁C₁⟩."""

    herald: str = DEFAULT_HERALD
    signs: typing.Tuple[int, int, int, int] = DEFAULT_SIGNS

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if len(signs) != 4 or set(signs) - {1, -1} or signs.count(-1) not in (1, 3):
            raise InvalidStateError(f"CHSH signs {self.signs} need one or three negative entries")
        object.__setattr__(self, "signs", signs)

    @property
    def sign_matrix(self) -> np.ndarray:
        return np.array(self.signs, dtype=float).reshape(2, 2)


def sign_patterns() -> typing.List[typing.Tuple[int, int, int, int]]:
    """The eight sign patterns of the CHSH symmetry class."""
    return [
        signs
        for signs in itertools.product((1, -1), repeat=4)
        if signs.count(-1) in (1, 3)
    ]


def bob_weights(labels: typing.Sequence[str]) -> np.ndarray:
    """Rows: the weight of each Bob outcome in the B⁰ and B¹ correlators."""
    if len(labels) == 4:
        if sorted(labels) != sorted(BELL_LABELS):
            raise InvalidPovmError(f"Four-outcome labels must be 00, 01, 10 and 11, got {list(labels)}")
        return np.array([[(-1.0) ** int(label[j]) for label in labels] for j in (0, 1)])
    if len(labels) == 3:
        first = {"00": 1.0, "01": 1.0, GROUPED_LABEL: -1.0}
        restricted = {"00": 1.0, "01": -1.0, GROUPED_LABEL: 0.0}
        if set(labels) != set(first):
            raise InvalidPovmError(f"Three-outcome labels must be 00, 01 and {GROUPED_LABEL}, got {list(labels)}")
        return np.array([[first[label] for label in labels], [restricted[label] for label in labels]])
    raise ArityError("3 or 4", len(labels))


def correlator_table(table: np.ndarray, labels: typing.Sequence[str]) -> np.ndarray:
    """Tripartite correlators as an array ``[..., x, z, j]``.

    For four outcomes, j selects the bit b^j; for three outcomes, j = 0 is the B⁰ correlator
    and j = 1 the restricted (b⁰ = 0) B¹ correlator.
    """
    return np.einsum("...xzabc,ac,jb->...xzj", table, _PARITY, bob_weights(labels))


def ij_table(table: np.ndarray, labels: typing.Sequence[str]) -> typing.Tuple[np.ndarray, np.ndarray]:
    """I and J of one or many tables."""
    correlators = correlator_table(table, labels)
    i_value = correlators[..., 0].sum(axis=(-2, -1)) / 4
    j_value = np.einsum("...xz,xz->...", correlators[..., 1], _PARITY) / 4
    return i_value, j_value


def b_table(table: np.ndarray, labels: typing.Sequence[str]) -> np.ndarray:
    i_value, j_value = ij_table(table, labels)
    return np.sqrt(np.abs(i_value)) + np.sqrt(np.abs(j_value))


def _check_arity(dist: TripartiteDistribution, expected: int):
    if dist.b_arity != expected:
        raise ArityError(expected, dist.b_arity)


def correlator_14(dist: TripartiteDistribution, x: int, j: int, z: int) -> float:
    """⟨A_x B^j C_z⟩ = Σ (−1)^{a+b^j+c} P(a, b⁰b¹, c | x, z)."""
    _check_arity(dist, 4)
    return float(correlator_table(dist.table, dist.labels)[x, z, j])


def ij_14(dist: TripartiteDistribution) -> IJPair:
    """I = ¼ Σ ⟨A_x B⁰ C_z⟩ and J = ¼ Σ (−1)^{x+z} ⟨A_x B¹ C_z⟩ for the full measurement."""
    _check_arity(dist, 4)
    i_value, j_value = ij_table(dist.table, dist.labels)
    return IJPair(float(i_value), float(j_value), ScenarioName.FOURTEEN.value)


def correlators_13(dist: TripartiteDistribution, x: int, z: int) -> typing.Tuple[float, float]:
    """The B⁰ correlator and the unnormalized restricted B¹ correlator for the partial measurement.

    The restricted correlator sums over b ∈ {00, 01} without conditioning on b⁰ = 0.
    """
    _check_arity(dist, 3)
    correlators = correlator_table(dist.table, dist.labels)
    return float(correlators[x, z, 0]), float(correlators[x, z, 1])


def ij_13(dist: TripartiteDistribution) -> IJPair:
    _check_arity(dist, 3)
    i_value, j_value = ij_table(dist.table, dist.labels)
    return IJPair(float(i_value), float(j_value), ScenarioName.THIRTEEN.value)


def ij_for(dist: TripartiteDistribution) -> IJPair:
    """Dispatches to :func:`ij_14` or :func:`ij_13` by Bob's alphabet size."""
    if dist.b_arity == 4:
        return ij_14(dist)
    return ij_13(dist)


def bilocal_parameter(ij: IJPair) -> float:
    """B = √|I| + √|J|; bilocal models satisfy B ≤ 1."""
    return float(np.sqrt(abs(ij.i_value)) + np.sqrt(abs(ij.j_value)))


def chsh_correlators(pair: ConditionedPair, settings: ScenarioSettings) -> np.ndarray:
    """⟨A_x C_z⟩ conditioned on the pair's herald, as an array ``[x, z]``."""
    return np.einsum("xzac,ac->xz", conditional_ac_distribution(pair, settings), _PARITY)


def _find_herald(pairs: typing.Sequence[ConditionedPair], herald: str) -> ConditionedPair:
    for pair in pairs:
        if pair.herald_label == herald:
            if pair.herald_probability < ATOL_CLAMP:
                raise HeraldNeverFires(herald, pair.herald_probability)
            return pair
    raise HeraldNeverFires(herald, 0.0)


def chsh(
    pairs: typing.Sequence[ConditionedPair],
    settings: ScenarioSettings,
    config: ChshConfig = ChshConfig(),
) -> float:
    """Signed sum of the four conditioned correlators.

    :param pairs: Conditioned states for Bob's outcomes.
    :param settings: Alice's and Charlie's observables (normally the CHSH catalog).
    :param config: Herald and sign pattern; defaults to herald 01 (Φ⁻) with signs (+, +, −, +).
    :raises: :class:`~bilocaltk.exceptions.HeraldNeverFires` If the herald is absent or improbable.
    """
    pair = _find_herald(pairs, config.herald)
    return float((config.sign_matrix * chsh_correlators(pair, settings)).sum())


def best_chsh_config(
    pairs: typing.Sequence[ConditionedPair], settings: ScenarioSettings
) -> typing.Tuple[ChshConfig, float]:
    """Searches all heralds and sign patterns for the largest CHSH value.

    Ties keep the first herald (in Bob's label order) and the first sign pattern.
    """
    best = None
    for pair in pairs:
        if pair.herald_probability < ATOL_CLAMP:
            continue
        correlators = chsh_correlators(pair, settings)
        for signs in sign_patterns():
            config = ChshConfig(pair.herald_label, signs)
            value = float((config.sign_matrix * correlators).sum())
            if best is None or value > best[1] + ATOL_DERIVED:
                best = (config, value)
    if best is None:
        raise HeraldNeverFires("any", 0.0)
    return best


def chsh_table(
    table: np.ndarray, labels: typing.Sequence[str], config: ChshConfig = ChshConfig()
) -> np.ndarray:
    """CHSH value from one or many (empirical) tripartite tables, conditioned on the herald."""
    if config.herald not in labels:
        raise HeraldNeverFires(config.herald, 0.0)
    herald = list(labels).index(config.herald)
    heralded = table[..., herald, :]
    totals = heralded.sum(axis=(-2, -1), keepdims=True)
    if np.any(totals <= 0):
        raise HeraldNeverFires(config.herald, 0.0)
    correlators = np.einsum("...xzac,ac->...xz", heralded / totals, _PARITY)
    return np.einsum("...xz,xz->...", correlators, config.sign_matrix)


def predicted_curves(v: float) -> typing.Tuple[float, float, float]:
    """Closed-form values for white noise at overall visibility v.

    :return: (√(2v), √(3v/2), 2√2·v)
    :raises: :class:`~bilocaltk.exceptions.VisibilityOutOfRange` If v is outside [0, 1].
    """
    v = check_range(v, "v")
    return float(np.sqrt(2 * v)), float(np.sqrt(1.5 * v)), float(2 * np.sqrt(2) * v)


def thresholds() -> typing.Dict[str, float]:
    """Visibilities above which each test is violated."""
    return {
        ScenarioName.FOURTEEN.value: 0.5,
        ScenarioName.THIRTEEN.value: 2.0 / 3.0,
        ScenarioName.CHSH.value: 1.0 / np.sqrt(2.0),
    }


def predicted_value(scenario: typing.Union[ScenarioName, str], v: float) -> float:
    """The curve of one scenario: B for 14 and 13, the CHSH value for chsh."""
    name = scenario_name(scenario)
    b14, b13, s = predicted_curves(v)
    return {ScenarioName.FOURTEEN: b14, ScenarioName.THIRTEEN: b13, ScenarioName.CHSH: s}[name]
