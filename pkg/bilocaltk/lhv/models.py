"""Finite hidden-variable models with deterministic end nodes and a stochastic middle node."""
import itertools
import logging
import typing
from dataclasses import dataclass

import numpy as np

from bilocaltk.exceptions import ArityError, InvalidModelError
from bilocaltk.inequalities import b_table
from bilocaltk.measurements import ScenarioName
from bilocaltk.network import DEFAULT_LABELS, TripartiteDistribution
from bilocaltk.util import ATOL_CLAMP, ATOL_DERIVED

logger = logging.getLogger(__name__)

STRATEGIES = np.array([[0, 0], [1, 1], [0, 1], [1, 0]])
"""The four deterministic responses of a party with one input bit: 0, 1, x and 1 − x."""

_SCENARIO_BY_ARITY = {4: ScenarioName.FOURTEEN.value, 3: ScenarioName.THIRTEEN.value}


def _simplex(weights, name: str) -> np.ndarray:
    weights = np.array(weights, dtype=float)
    if weights.ndim != 1 or weights.size < 1:
        raise InvalidModelError(f"{name} must be a non-empty vector")
    if weights.min() < -ATOL_CLAMP or abs(weights.sum() - 1) > ATOL_DERIVED:
        raise InvalidModelError(f"{name} is not a probability vector: {weights}")
    weights = np.clip(weights, 0.0, None)
    return weights / weights.sum()


def _rows(rows, shape: typing.Tuple[int, ...], name: str) -> np.ndarray:
    rows = np.array(rows, dtype=float)
    if rows.shape[:-1] != shape or rows.shape[-1] not in DEFAULT_LABELS:
        raise InvalidModelError(f"{name} has shape {rows.shape}, expected {shape} + (3 or 4,)")
    if rows.min() < -ATOL_CLAMP or not np.allclose(rows.sum(axis=-1), 1.0, rtol=0, atol=ATOL_DERIVED):
        raise InvalidModelError(f"{name} rows are not probability vectors")
    rows = np.clip(rows, 0.0, None)
    return rows / rows.sum(axis=-1, keepdims=True)


def _responses(table, cardinality: int, name: str) -> np.ndarray:
    table = np.array(table)
    if table.shape != (cardinality, 2) or not np.isin(table, (0, 1)).all():
        raise InvalidModelError(f"{name} must be a ({cardinality}, 2) table of output bits")
    return table.astype(np.int64)


def _one_hot(table: np.ndarray) -> np.ndarray:
    """``[λ, input, output]`` indicator of a deterministic response table."""
    return np.eye(2)[table]


def _freeze(instance, **arrays):
    for name, array in arrays.items():
        array.flags.writeable = False
        object.__setattr__(instance, name, array)


@dataclass(frozen=True, eq=False)
class LocalModel:
    """A single hidden variable λ with weights q(λ) shared by all three parties.

    Alice's and Charlie's tables hold a = f_A(x, λ) and c = f_C(z, λ) as ``table[λ, input]``;
    ``bob_table[λ]`` is Bob's outcome distribution.
    """

    weights: np.ndarray
    alice_table: np.ndarray
    bob_table: np.ndarray
    charlie_table: np.ndarray

    def __post_init__(self):
        weights = _simplex(self.weights, "weights")
        k = weights.size
        _freeze(
            self,
            weights=weights,
            alice_table=_responses(self.alice_table, k, "alice_table"),
            bob_table=_rows(self.bob_table, (k,), "bob_table"),
            charlie_table=_responses(self.charlie_table, k, "charlie_table"),
        )

    @property
    def cardinality(self) -> int:
        return self.weights.size

    @property
    def b_arity(self) -> int:
        return self.bob_table.shape[-1]

    def as_dict(self) -> dict:
        return {
            "class": "local",
            "weights": self.weights,
            "alice_table": self.alice_table,
            "bob_table": self.bob_table,
            "charlie_table": self.charlie_table,
        }


@dataclass(frozen=True, eq=False)
class BilocalModel:
    """Two independent hidden variables λ₁ (source S₁) and λ₂ (source S₂).

    The joint weight q₁(λ₁)·q₂(λ₂) is never stored; ``bob_table[λ₁, λ₂]`` is Bob's outcome
    distribution given both variables.
    """

    weights1: np.ndarray
    weights2: np.ndarray
    alice_table: np.ndarray
    bob_table: np.ndarray
    charlie_table: np.ndarray

    def __post_init__(self):
        weights1 = _simplex(self.weights1, "weights1")
        weights2 = _simplex(self.weights2, "weights2")
        k1, k2 = weights1.size, weights2.size
        _freeze(
            self,
            weights1=weights1,
            weights2=weights2,
            alice_table=_responses(self.alice_table, k1, "alice_table"),
            bob_table=_rows(self.bob_table, (k1, k2), "bob_table"),
            charlie_table=_responses(self.charlie_table, k2, "charlie_table"),
        )

    @property
    def cardinalities(self) -> typing.Tuple[int, int]:
        return self.weights1.size, self.weights2.size

    @property
    def b_arity(self) -> int:
        return self.bob_table.shape[-1]

    def as_dict(self) -> dict:
        return {
            "class": "bilocal",
            "weights1": self.weights1,
            "weights2": self.weights2,
            "alice_table": self.alice_table,
            "bob_table": self.bob_table,
            "charlie_table": self.charlie_table,
        }


def _distribution(table: np.ndarray, b_arity: int, scenario: typing.Optional[str]) -> TripartiteDistribution:
    return TripartiteDistribution(scenario or _SCENARIO_BY_ARITY[b_arity], table, DEFAULT_LABELS[b_arity])


def _check_arity(model, b_arity: typing.Optional[int]):
    if b_arity is not None and model.b_arity != b_arity:
        raise ArityError(b_arity, model.b_arity)


def eval_bilocal(
    model: BilocalModel, b_arity: typing.Optional[int] = None, scenario: typing.Optional[str] = None
) -> TripartiteDistribution:
    """P(a,b,c|x,z) = Σ q₁(λ₁) q₂(λ₂) [a = f_A(x,λ₁)] P(b|λ₁,λ₂) [c = f_C(z,λ₂)].

    :param model: The model to evaluate.
    :param b_arity: Expected size of Bob's alphabet, checked against the model if given.
    :param scenario: Scenario name stored with the distribution; derived from the arity if omitted.
    :raises: :class:`~bilocaltk.exceptions.ArityError` If the model has another Bob alphabet.
    """
    _check_arity(model, b_arity)
    table = np.einsum(
        "i,j,ixa,ijb,jzc->xzabc",
        model.weights1,
        model.weights2,
        _one_hot(model.alice_table),
        model.bob_table,
        _one_hot(model.charlie_table),
    )
    return _distribution(table, model.b_arity, scenario)


def eval_local(
    model: LocalModel, b_arity: typing.Optional[int] = None, scenario: typing.Optional[str] = None
) -> TripartiteDistribution:
    """P(a,b,c|x,z) = Σ q(λ) [a = f_A(x,λ)] P(b|λ) [c = f_C(z,λ)]."""
    _check_arity(model, b_arity)
    table = np.einsum(
        "l,lxa,lb,lzc->xzabc",
        model.weights,
        _one_hot(model.alice_table),
        model.bob_table,
        _one_hot(model.charlie_table),
    )
    return _distribution(table, model.b_arity, scenario)


def _check_cardinalities(*cardinalities: int):
    if min(cardinalities) < 1:
        raise InvalidModelError(f"Hidden-variable cardinalities must be positive, got {cardinalities}")
    return cardinalities


def sample_bilocal(rng: np.random.Generator, k1: int = 4, k2: int = 4, b_arity: int = 4) -> BilocalModel:
    """Draws weights and Bob rows uniformly from their simplices and Alice's and Charlie's tables uniformly."""
    _check_cardinalities(k1, k2)
    return BilocalModel(
        weights1=rng.dirichlet(np.ones(k1)),
        weights2=rng.dirichlet(np.ones(k2)),
        alice_table=rng.integers(0, 2, size=(k1, 2)),
        bob_table=rng.dirichlet(np.ones(b_arity), size=(k1, k2)),
        charlie_table=rng.integers(0, 2, size=(k2, 2)),
    )


def sample_local(rng: np.random.Generator, k: int = 8, b_arity: int = 4) -> LocalModel:
    _check_cardinalities(k)
    return LocalModel(
        weights=rng.dirichlet(np.ones(k)),
        alice_table=rng.integers(0, 2, size=(k, 2)),
        bob_table=rng.dirichlet(np.ones(b_arity), size=k),
        charlie_table=rng.integers(0, 2, size=(k, 2)),
    )


def sample_b_values(
    rng: np.random.Generator,
    count: int,
    k1: int = 4,
    k2: int = 4,
    b_arity: int = 4,
    chunk: int = 10000,
) -> np.ndarray:
    """B of *count* random bilocal models, drawn as :func:`sample_bilocal` does and evaluated in batches."""
    _check_cardinalities(k1, k2)
    labels = DEFAULT_LABELS[b_arity]
    values = []
    for start in range(0, count, chunk):
        size = min(chunk, count - start)
        tables = np.einsum(
            "ni,nj,nixa,nijb,njzc->nxzabc",
            rng.dirichlet(np.ones(k1), size=size),
            rng.dirichlet(np.ones(k2), size=size),
            _one_hot(rng.integers(0, 2, size=(size, k1, 2))),
            rng.dirichlet(np.ones(b_arity), size=(size, k1, k2)),
            _one_hot(rng.integers(0, 2, size=(size, k2, 2))),
            optimize=True,
        )
        values.append(b_table(tables, labels))
    return np.concatenate(values) if values else np.empty(0)


def _point_mass(b: int, b_arity: int) -> np.ndarray:
    return np.eye(b_arity)[b]


def enumerate_deterministic_bilocal(b_arity: int = 4) -> typing.Iterator[BilocalModel]:
    """All models with K₁ = K₂ = 1 and a deterministic Bob: 4 · 4 · b_arity of them."""
    for alice, charlie, b in itertools.product(range(len(STRATEGIES)), range(len(STRATEGIES)), range(b_arity)):
        yield BilocalModel(
            weights1=[1.0],
            weights2=[1.0],
            alice_table=STRATEGIES[[alice]],
            bob_table=_point_mass(b, b_arity)[None, None, :],
            charlie_table=STRATEGIES[[charlie]],
        )


def two_strategy_witness(b_arity: int = 4) -> LocalModel:
    """A local model reaching B = √2.

    With probability ½ everybody outputs 0 and Bob's first bit is 0; otherwise a = x, c = z and
    Bob's second bit is 0. The first branch saturates I, the second J, giving I = J = ½.
    """
    if b_arity == 4:
        rows = [[0.5, 0.5, 0.0, 0.0], [0.5, 0.0, 0.5, 0.0]]
    elif b_arity == 3:
        rows = [[0.5, 0.5, 0.0], [1.0, 0.0, 0.0]]
    else:
        raise ArityError("3 or 4", b_arity)
    return LocalModel(
        weights=[0.5, 0.5],
        alice_table=[[0, 0], [0, 1]],
        bob_table=rows,
        charlie_table=[[0, 0], [0, 1]],
    )


def canonical_tables(cardinality: int) -> np.ndarray:
    """Response tables that cycle through the four deterministic strategies."""
    return STRATEGIES[np.arange(cardinality) % len(STRATEGIES)]


def canonical_local_tables(cardinality: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Alice/Charlie strategy pairs for a single hidden variable, equal strategies first."""
    n = len(STRATEGIES)
    pairs = [(s, s) for s in range(n)] + [(s, t) for s in range(n) for t in range(n) if s != t]
    chosen = [pairs[k % len(pairs)] for k in range(cardinality)]
    return STRATEGIES[[s for s, _ in chosen]], STRATEGIES[[t for _, t in chosen]]
