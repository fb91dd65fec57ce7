"""Born-rule engine for the linear network A — S₁ — B — S₂ — C.

The joint state ρ₁ ⊗ ρ₂ lives on A ⊗ B₁ ⊗ B₂ ⊗ C, so Bob's measurement acts on the two
middle qubits and no reordering of operator factors is needed.
"""
import logging
import typing
from dataclasses import dataclass

import numpy as np

from bilocaltk.exceptions import DimensionMismatch, HeraldNeverFires, InvalidStateError
from bilocaltk.measurements import GROUPED_LABEL, Povm, ScenarioSettings
from bilocaltk.qcore import DensityMatrix, tensor
from bilocaltk.util import ATOL_CLAMP, ATOL_DERIVED

logger = logging.getLogger(__name__)

DEFAULT_LABELS = {
    4: ("00", "01", "10", "11"),
    3: ("00", "01", GROUPED_LABEL),
}


def _clamp(table: np.ndarray) -> np.ndarray:
    if (low := table.min()) < -ATOL_CLAMP:
        raise InvalidStateError(f"Negative probability {low}")
    return np.clip(table, 0.0, None)


@dataclass(frozen=True, eq=False)
class TripartiteDistribution:
    """The table P(a, b, c | x, z), stored as ``table[x, z, a, b, c]``.

    Roundoff negatives down to −1e-12 are clamped to zero; each setting must be normalized
    and Bob's marginal must not depend on (x, z).
    """

    scenario: str
    table: np.ndarray
    labels: typing.Tuple[str, ...] = None

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != 5 or table.shape[:3] != (2, 2, 2) or table.shape[4] != 2:
            raise DimensionMismatch(f"Distribution table has shape {table.shape}")
        arity = table.shape[3]
        if arity not in DEFAULT_LABELS:
            raise DimensionMismatch(f"Bob alphabet of size {arity} is not supported")

        table = _clamp(table)
        totals = table.sum(axis=(2, 3, 4))
        if not np.allclose(totals, 1.0, rtol=0, atol=ATOL_DERIVED):
            raise InvalidStateError(f"Distribution is not normalized per setting: {totals.ravel()}")
        marginal = table.sum(axis=(2, 4))
        if not np.allclose(marginal, marginal[0, 0], rtol=0, atol=ATOL_DERIVED):
            raise InvalidStateError("Bob's marginal depends on the inputs of Alice and Charlie")

        labels = tuple(self.labels) if self.labels is not None else DEFAULT_LABELS[arity]
        if len(labels) != arity:
            raise DimensionMismatch(f"{len(labels)} labels for a Bob alphabet of size {arity}")

        table.flags.writeable = False
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "labels", labels)

    @property
    def b_arity(self) -> int:
        return self.table.shape[3]

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def marginal_b(self) -> np.ndarray:
        """P(b), taken at x = z = 0."""
        return self.table[0, 0].sum(axis=(0, 2))

    def for_setting(self, x: int, z: int) -> np.ndarray:
        """The (a, b, c) table for one pair of inputs."""
        return self.table[x, z]

    def relabel_alice(self) -> "TripartiteDistribution":
        """Returns the distribution with Alice's outcomes swapped on every setting."""
        return TripartiteDistribution(self.scenario, self.table[:, :, ::-1], self.labels)

    def allclose(self, other: "TripartiteDistribution", atol: float = ATOL_DERIVED) -> bool:
        return self.table.shape == other.table.shape and np.allclose(
            self.table, other.table, rtol=0, atol=atol
        )


@dataclass(frozen=True)
class ConditionedPair:
    """The Alice–Charlie state prepared when Bob obtains *herald_label*."""

    herald_label: str
    herald_probability: float
    state: DensityMatrix


def _stacked_effects(observables) -> np.ndarray:
    return np.array([[obs.effect0, obs.effect1] for obs in observables])


def _check_inputs(rho1: DensityMatrix, rho2: DensityMatrix, bob: Povm):
    for name, rho in (("rho1", rho1), ("rho2", rho2)):
        if rho.dim != 4:
            raise DimensionMismatch(f"{name} must be a two-qubit state, got dimension {rho.dim}")
    if bob.dim != 4:
        raise DimensionMismatch(f"Bob's measurement must act on two qubits, got dimension {bob.dim}")


def _joint(rho1: DensityMatrix, rho2: DensityMatrix) -> np.ndarray:
    # Axes: row (A, B₁B₂, C), column (A, B₁B₂, C).
    return tensor(rho1.matrix, rho2.matrix).reshape(2, 4, 2, 2, 4, 2)


def tripartite_distribution(
    rho1: DensityMatrix, rho2: DensityMatrix, settings: ScenarioSettings, bob: Povm
) -> TripartiteDistribution:
    """Computes P(a,b,c|x,z) = tr[(A_{a|x} ⊗ E_b ⊗ C_{c|z})(ρ₁ ⊗ ρ₂)].

    :param rho1: The state of S₁ on A ⊗ B₁.
    :param rho2: The state of S₂ on B₂ ⊗ C.
    :param settings: Alice's and Charlie's observables.
    :param bob: Bob's measurement on B₁ ⊗ B₂.
    :return: The tripartite distribution, labelled with Bob's outcome labels.
    :raises: :class:`~bilocaltk.exceptions.DimensionMismatch` If a state or the measurement has the
        wrong size.
    """
    _check_inputs(rho1, rho2, bob)

    alice = _stacked_effects(settings.alice)
    charlie = _stacked_effects(settings.charlie)
    effects = np.array(bob.effects)

    # tr(Oρ) = Σ O[(i,k,m),(j,l,n)] ρ[(j,l,n),(i,k,m)]
    table = np.einsum(
        "xaij,bkl,zcmn,jlnikm->xzabc", alice, effects, charlie, _joint(rho1, rho2)
    ).real
    return TripartiteDistribution(settings.scenario, table, bob.labels)


def swapped_state(
    rho1: DensityMatrix, rho2: DensityMatrix, bob: Povm, b: str
) -> ConditionedPair:
    """Conditions Alice and Charlie on Bob's outcome *b*.

    :return: The herald probability p_b and Tr_{B₁B₂}[(𝟙 ⊗ E_b ⊗ 𝟙)(ρ₁ ⊗ ρ₂)] / p_b.
    :raises: :class:`~bilocaltk.exceptions.HeraldNeverFires` If p_b < 1e-12.
    """
    _check_inputs(rho1, rho2, bob)
    effect = bob.effect(b)

    unnormalized = np.einsum("kl,alcdke->acde", effect, _joint(rho1, rho2)).reshape(4, 4)
    probability = float(np.trace(unnormalized).real)
    if probability < ATOL_CLAMP:
        raise HeraldNeverFires(b, probability)

    logger.debug("Herald %s fires with probability %.6f", b, probability)
    state = unnormalized / probability
    return ConditionedPair(b, probability, DensityMatrix((state + state.conj().T) / 2))


def all_swapped_states(
    rho1: DensityMatrix, rho2: DensityMatrix, bob: Povm
) -> typing.List[ConditionedPair]:
    """Conditioned states for every outcome of Bob that can occur."""
    pairs = []
    for label in bob.labels:
        try:
            pairs.append(swapped_state(rho1, rho2, bob, label))
        except HeraldNeverFires as e:
            logger.debug("Skipping herald: %s", e)
    return pairs


def conditional_ac_distribution(pair: ConditionedPair, settings: ScenarioSettings) -> np.ndarray:
    """Born rule on the conditioned state.

    :return: Array ``table[x, z, a, c]`` of P(a, c | x, z, b).
    """
    alice = _stacked_effects(settings.alice)
    charlie = _stacked_effects(settings.charlie)
    sigma = pair.state.matrix.reshape(2, 2, 2, 2)
    return _clamp(np.einsum("xaij,zcmn,jnim->xzac", alice, charlie, sigma).real)


def reconstruct_distribution(
    pairs: typing.Sequence[ConditionedPair],
    settings: ScenarioSettings,
    labels: typing.Sequence[str],
) -> TripartiteDistribution:
    """Rebuilds P(a,b,c|x,z) = Σ_b p_b·P(a,c|x,z,b) from conditioned pairs.

    Outcomes that never fire are absent from *pairs* and get probability zero.
    """
    table = np.zeros((2, 2, 2, len(labels), 2))
    for pair in pairs:
        b = list(labels).index(pair.herald_label)
        table[:, :, :, b, :] = pair.herald_probability * conditional_ac_distribution(
            pair, settings
        )
    return TripartiteDistribution(settings.scenario, table, tuple(labels))
