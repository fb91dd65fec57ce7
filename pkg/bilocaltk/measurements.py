"""Measurement settings for the three scenarios and Bob's joint measurements.

Bob's outputs are bit-strings b = b⁰b¹. For the Bell state measurement the labels map
00 → Φ⁺, 01 → Φ⁻, 10 → Ψ⁺, 11 → Ψ⁻; the partial measurement merges 10 and 11 into
the single outcome :data:`GROUPED_LABEL`.
"""
import enum
import logging
import typing
from dataclasses import dataclass

import numpy as np

from bilocaltk.exceptions import InvalidPovmError, UnknownScenario
from bilocaltk.qcore import (
    BellState,
    BlochObservable,
    DensityMatrix,
    SIGMA_X,
    SIGMA_Z,
    bell_state,
    bloch_observable,
    ket,
    min_pt_eigenvalue,
    projector,
    tensor,
    trivial_observable,
)
from bilocaltk.util import ATOL_STATE, check_range

logger = logging.getLogger(__name__)

BELL_LABELS = {
    "00": BellState.PHI_PLUS,
    "01": BellState.PHI_MINUS,
    "10": BellState.PSI_PLUS,
    "11": BellState.PSI_MINUS,
}
GROUPED_LABEL = "10|11"
"""Label of the partial measurement's outcome that does not distinguish Ψ⁺ from Ψ⁻."""


class ScenarioName(str, enum.Enum):
    """The measurement scenarios of the three-node network.

    Subclassing :class:`str` simplifies json serialization using :func:`json.dumps`.
    """

    FOURTEEN = "14"
    """Bob has a single input and four outputs (full Bell state measurement)."""
    THIRTEEN = "13"
    """Bob has a single input and three outputs (partial Bell state measurement)."""
    CHSH = "chsh"
    """Event-ready CHSH test between Alice and Charlie."""


@dataclass(frozen=True, eq=False)
class Povm:
    """Ordered list of positive effects that sum to the identity."""

    effects: typing.Tuple[np.ndarray, ...]
    labels: typing.Tuple[str, ...]

    def __post_init__(self):
        effects = []
        for effect in self.effects:
            effect = np.array(effect, dtype=complex)
            effect.flags.writeable = False
            effects.append(effect)
        labels = tuple(self.labels)

        if not effects or len(effects) != len(labels):
            raise InvalidPovmError(f"{len(effects)} effects but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise InvalidPovmError(f"Outcome labels are not distinct: {labels}")

        dim = effects[0].shape[0]
        for label, effect in zip(labels, effects):
            if effect.shape != (dim, dim):
                raise InvalidPovmError(f"Effect {label} has shape {effect.shape}")
            if not np.allclose(effect, effect.conj().T, rtol=0, atol=ATOL_STATE):
                raise InvalidPovmError(f"Effect {label} is not Hermitian")
            if (low := np.linalg.eigvalsh(effect).min()) < -ATOL_STATE:
                raise InvalidPovmError(f"Effect {label} has negative eigenvalue {low}")
        if not np.allclose(sum(effects), np.eye(dim), rtol=0, atol=ATOL_STATE):
            raise InvalidPovmError("Effects do not sum to the identity")

        object.__setattr__(self, "effects", tuple(effects))
        object.__setattr__(self, "labels", labels)

    @property
    def arity(self) -> int:
        return len(self.effects)

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidPovmError(f"No outcome labelled {label!r}; valid: {', '.join(self.labels)}")

    def effect(self, label: str) -> np.ndarray:
        return self.effects[self.index(label)]

    def __repr__(self):
        return f"<Povm=(labels={','.join(self.labels)})>"


@dataclass(frozen=True)
class ScenarioSettings:
    """Alice's and Charlie's observables, indexed by their inputs x, z ∈ {0, 1}."""

    scenario: str
    alice: typing.Tuple[BlochObservable, BlochObservable]
    charlie: typing.Tuple[BlochObservable, BlochObservable]


def _xz(x: float, z: float) -> typing.Tuple[float, float, float]:
    return x, 0.0, z


_R2 = np.sqrt(2.0)
_R3 = np.sqrt(3.0)

_CATALOG = {
    ScenarioName.FOURTEEN: (
        [_xz(1 / _R2, 1 / _R2), _xz(-1 / _R2, 1 / _R2)],
        [_xz(1 / _R2, 1 / _R2), _xz(-1 / _R2, 1 / _R2)],
    ),
    ScenarioName.THIRTEEN: (
        [_xz(1 / _R3, _R2 / _R3), _xz(-1 / _R3, _R2 / _R3)],
        [_xz(1 / _R3, _R2 / _R3), _xz(-1 / _R3, _R2 / _R3)],
    ),
    ScenarioName.CHSH: (
        [_xz(0.0, 1.0), _xz(1.0, 0.0)],
        [_xz(1 / _R2, 1 / _R2), _xz(-1 / _R2, 1 / _R2)],
    ),
}


def scenario_name(scenario: typing.Union[ScenarioName, str]) -> ScenarioName:
    """Parses a scenario name case-insensitively.

    :raises: :class:`~bilocaltk.exceptions.UnknownScenario` If the scenario does not exist.
    """
    if isinstance(scenario, ScenarioName):
        return scenario
    try:
        return ScenarioName(str(scenario).lower())
    except ValueError:
        raise UnknownScenario(scenario, [s.value for s in ScenarioName])


def settings_catalog(scenario: typing.Union[ScenarioName, str]) -> ScenarioSettings:
    """Returns the measurement settings that give the optimal violations for a scenario.

    :param scenario: One of ``14``, ``13``, ``chsh``.
    :raises: :class:`~bilocaltk.exceptions.UnknownScenario` If the scenario does not exist.
    """
    name = scenario_name(scenario)

    alice_axes, charlie_axes = _CATALOG[name]
    return ScenarioSettings(
        name.value,
        tuple(bloch_observable(axis) for axis in alice_axes),
        tuple(bloch_observable(axis) for axis in charlie_axes),
    )


def bsm_full() -> Povm:
    """The complete Bell state measurement on B₁ ⊗ B₂."""
    return Povm(
        tuple(bell_state(kind).matrix for kind in BELL_LABELS.values()),
        tuple(BELL_LABELS.keys()),
    )


def group_outcomes(povm: Povm, groups: typing.Dict[str, typing.Sequence[str]]) -> Povm:
    """Coarse-grains a measurement by summing the effects of grouped outcomes.

    :param povm: The fine-grained measurement.
    :param groups: Ordered mapping from new label to the old labels it merges. Every old label
        must appear exactly once.
    :return: The coarse-grained measurement.
    """
    used = [label for members in groups.values() for label in members]
    if sorted(used) != sorted(povm.labels):
        raise InvalidPovmError(f"Grouping {groups} does not partition {povm.labels}")
    return Povm(
        tuple(sum(povm.effect(label) for label in members) for members in groups.values()),
        tuple(groups.keys()),
    )


def partial_grouping(povm: Povm) -> Povm:
    """Merges outcomes 10 and 11 of a four-outcome measurement."""
    return group_outcomes(povm, {"00": ["00"], "01": ["01"], GROUPED_LABEL: ["10", "11"]})


def bsm_partial() -> Povm:
    """The partial Bell state measurement: Φ⁺, Φ⁻ and the unresolved Ψ± pair."""
    return partial_grouping(bsm_full())


def bsm_noisy(povm: Povm, v_b: float) -> Povm:
    """Mixes every effect with white noise, E → v_b·E + (1 − v_b)·tr(E)/d·𝟙.

    :param povm: The ideal measurement.
    :param v_b: The measurement visibility in [0, 1].
    :raises: :class:`~bilocaltk.exceptions.VisibilityOutOfRange` If v_b is outside [0, 1].
    """
    v_b = check_range(v_b, "v_b")
    if v_b == 1.0:
        return povm
    identity = np.eye(povm.dim)
    return Povm(
        tuple(
            v_b * effect + (1 - v_b) * np.trace(effect).real / povm.dim * identity
            for effect in povm.effects
        ),
        povm.labels,
    )


def _eigenprojectors(pauli: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    return (np.eye(2) + pauli) / 2, (np.eye(2) - pauli) / 2


def counterexample_bob() -> Povm:
    """Bob's separable measurement that still violates both bilocal inequalities.

    Bob reads the qubit from S₂ in the computational basis. On 0 he sets b⁰ to a σz
    measurement of the qubit from S₁ and draws b¹ at random; on 1 he sets b¹ to a σx
    measurement and draws b⁰ at random. The random bit is folded into the ½ weights.
    """
    pz = _eigenprojectors(SIGMA_Z)
    px = _eigenprojectors(SIGMA_X)
    zero = projector(ket("0"))
    one = projector(ket("1"))

    effects = []
    labels = []
    for b0 in (0, 1):
        for b1 in (0, 1):
            effects.append(0.5 * tensor(pz[b0], zero) + 0.5 * tensor(px[b1], one))
            labels.append(f"{b0}{b1}")
    return Povm(tuple(effects), tuple(labels))


@dataclass(frozen=True)
class CounterexampleSetup:
    """Sources and end-node settings of the separable-measurement counter-example."""

    rho_ab: DensityMatrix
    rho_bc: DensityMatrix
    settings: ScenarioSettings


def counterexample_scenario() -> CounterexampleSetup:
    """S₁ sends Φ⁺, S₂ sends the classically correlated ½|00⟩⟨00| + ½|11⟩⟨11|.

    Alice measures (σz ± σx)/√2, Charlie measures 𝟙 (z = 0) and σz (z = 1).
    """
    rho_bc = DensityMatrix(0.5 * projector(ket("00")) + 0.5 * projector(ket("11")))
    settings = ScenarioSettings(
        "counterexample",
        (
            bloch_observable(_xz(1 / _R2, 1 / _R2)),
            bloch_observable(_xz(-1 / _R2, 1 / _R2)),
        ),
        (trivial_observable(), bloch_observable((0.0, 0.0, 1.0))),
    )
    return CounterexampleSetup(bell_state(BellState.PHI_PLUS), rho_bc, settings)


def effect_min_pt_eigenvalues(povm: Povm) -> typing.List[float]:
    """Smallest partial-transpose eigenvalue of each effect (B₂ transposed)."""
    return [min_pt_eigenvalue(effect) for effect in povm.effects]


def bob_negation_map(povm: Povm) -> typing.Tuple[int, ...]:
    """The outcome permutation induced by flipping both of Bob's qubits.

    Conjugating every effect with σx ⊗ σx models swapping the detector assignment of
    both of Bob's inputs. Each Bell projector is invariant, so the map is the identity
    for the full and partial Bell state measurements.

    :return: Tuple whose entry i is the index of the image of outcome i.
    :raises: :class:`~bilocaltk.exceptions.InvalidPovmError` If the flipped effects are not a
        permutation of the original ones.
    """
    flip = tensor(SIGMA_X, SIGMA_X)
    image = []
    for label, effect in zip(povm.labels, povm.effects):
        flipped = flip @ effect @ flip
        matches = [
            j
            for j, other in enumerate(povm.effects)
            if np.allclose(flipped, other, rtol=0, atol=1e-9)
        ]
        if not matches:
            raise InvalidPovmError(f"Outcome {label} is not mapped onto an outcome by the flip")
        image.append(matches[0])
    if sorted(image) != list(range(povm.arity)):
        raise InvalidPovmError(f"The flip does not permute the outcomes: {image}")
    return tuple(image)
