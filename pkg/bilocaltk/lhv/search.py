"""Coordinate-ascent searches and least-squares fits over local and bilocal hidden-variable models.

Alice's and Charlie's responses are fixed deterministic tables per restart; the searches move
the hidden-variable weights and Bob's rows, each of which lives on a probability simplex.
A block is updated by blending it with one simplex vertex at a time, the blend parameter
being chosen by golden-section search. With every other block fixed, I and J (and the model
distribution) are linear along such a blend, so the line objective is exact.

:func:`fit_bilocal` instead solves each block exactly by accelerated projected gradient.
"""
import asyncio
import concurrent.futures
import logging
import math
import typing

import numpy as np

from bilocaltk.exceptions import InvalidModelError
from bilocaltk.inequalities import bilocal_parameter, bob_weights, ij_for
from bilocaltk.lhv.models import (
    BilocalModel,
    LocalModel,
    canonical_local_tables,
    canonical_tables,
    eval_bilocal,
    eval_local,
)
from bilocaltk.network import TripartiteDistribution
from bilocaltk.scenario import get_scenario
from bilocaltk.util import ATOL_CLAMP, spawn_generators

logger = logging.getLogger(__name__)

GOLDEN_ITERATIONS = 48
CONVERGENCE_TOL = 1e-10
STEP_TOL = 1e-15
FIT_TOLERANCE = 1e-12
INNER_ITERATIONS = 500

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

T = typing.TypeVar("T")
Block = typing.Tuple[np.ndarray, tuple]


def golden_section(
    objective: typing.Callable[[float], float], iterations: int = GOLDEN_ITERATIONS
) -> typing.Tuple[float, float]:
    """Maximizes *objective* over t ∈ (0, 1].

    The full step t = 1 is always a candidate; t = 0 (the incumbent) is left to the caller.

    :return: The best blend parameter and its value.
    """
    low, high = 0.0, 1.0
    c = high - _INV_PHI * (high - low)
    d = low + _INV_PHI * (high - low)
    fc, fd = objective(c), objective(d)
    best_t, best_value = 1.0, objective(1.0)

    for _ in range(iterations):
        for t, value in ((c, fc), (d, fd)):
            if value > best_value:
                best_t, best_value = t, value
        if fc >= fd:
            high, d, fd = d, c, fc
            c = high - _INV_PHI * (high - low)
            fc = objective(c)
        else:
            low, c, fc = c, d, fd
            d = low + _INV_PHI * (high - low)
            fd = objective(d)

    for t, value in ((c, fc), (d, fd)):
        if value > best_value:
            best_t, best_value = t, value
    return best_t, best_value


def simplex_projection(c: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex: argmin ‖x − c‖² with x ≥ 0, Σx = 1.

    Arrays with more than one axis are projected row by row along the last axis.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[-1]
    a = -np.sort(-c, axis=-1)
    lambdas = (np.cumsum(a, axis=-1) - 1) / np.arange(1, n + 1)
    # the indices with a_k > λ_k form a prefix; the last of them fixes the shift
    count = np.count_nonzero(a > lambdas, axis=-1)
    shift = np.take_along_axis(lambdas, (count - 1)[..., None], axis=-1)
    return np.maximum(c - shift, 0)


def _scaled_projection(y: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Projects row r of *y* onto scale[r]·Δ; rows with zero scale become zero."""
    positive = scale > 0
    safe = np.where(positive, scale, 1.0)[:, None]
    return np.where(positive[:, None], safe * simplex_projection(y / safe), 0.0)


def _projected_least_squares(
    x: np.ndarray,
    forward: typing.Callable[[np.ndarray], np.ndarray],
    adjoint: typing.Callable[[np.ndarray], np.ndarray],
    target: np.ndarray,
    scale: np.ndarray,
    lipschitz: float,
    iterations: int,
) -> typing.Tuple[np.ndarray, float]:
    """Minimizes ½‖forward(x) − target‖² over rows x[r] ∈ scale[r]·Δ by accelerated projected gradient.

    Momentum is reset whenever it points uphill. Returns the better of the start and the last iterate.

    :return: The minimizer and its squared residual.
    """

    def loss(value):
        return float(((forward(value) - target) ** 2).sum())

    start_loss = loss(x)
    if lipschitz <= 0:
        return x, start_loss

    previous, y, t = x, x.copy(), 1.0
    for _ in range(iterations):
        current = _scaled_projection(y - adjoint(forward(y) - target) / lipschitz, scale)
        if np.max(np.abs(current - previous)) < STEP_TOL:
            previous = current
            break
        t_next = (1 + math.sqrt(1 + 4 * t * t)) / 2
        if float(((y - current) * (current - previous)).sum()) > 0:
            y, t_next = current, 1.0
        else:
            y = current + ((t - 1) / t_next) * (current - previous)
        previous, t = current, t_next

    final_loss = loss(previous)
    if final_loss <= start_loss:
        return previous, final_loss
    return x, start_loss


def _renormalize(weights: np.ndarray) -> np.ndarray:
    weights = np.clip(weights, 0.0, None)
    return weights / weights.sum()


def _vertices(size: int) -> np.ndarray:
    return np.eye(size)


def _b_value(i_value: float, j_value: float) -> float:
    return math.sqrt(abs(i_value)) + math.sqrt(abs(j_value))


def _signs(table: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Per hidden value: the sum and the alternating sum over inputs of (−1)^output, halved."""
    s = 1.0 - 2.0 * table
    return s.sum(axis=1) / 2, (s[:, 0] - s[:, 1]) / 2


def _ascent_sweep(blocks: typing.Sequence[Block], ij: typing.Callable[[], typing.Tuple[float, float]]) -> float:
    """One pass over all blocks; returns B after the pass."""
    i0, j0 = ij()
    for array, index in blocks:
        current = array[index].copy()
        for vertex in _vertices(current.size):
            array[index] = vertex
            i1, j1 = ij()
            array[index] = current

            def along(t, i0=i0, j0=j0, i1=i1, j1=j1):
                return _b_value(i0 + t * (i1 - i0), j0 + t * (j1 - j0))

            t, value = golden_section(along)
            if value > _b_value(i0, j0):
                current = _renormalize((1 - t) * current + t * vertex)
                array[index] = current
                i0, j0 = ij()
    return _b_value(i0, j0)


def _ascend(blocks: typing.Sequence[Block], ij, iterations: int) -> float:
    value = _b_value(*ij())
    for _ in range(iterations):
        improved = _ascent_sweep(blocks, ij)
        if improved - value < CONVERGENCE_TOL:
            return max(value, improved)
        value = improved
    return value


def _run_restarts(task: typing.Callable[[int], T], restarts: int, workers: int) -> typing.List[T]:
    if workers <= 1:
        return [task(index) for index in range(restarts)]
    return asyncio.run(_gather_restarts(task, restarts, workers))


async def _gather_restarts(task: typing.Callable[[int], T], restarts: int, workers: int) -> typing.List[T]:
    loop = asyncio.get_running_loop()
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return await asyncio.gather(*[loop.run_in_executor(pool, task, index) for index in range(restarts)])


def _best(results, maximize: bool = True):
    """First result with the best score; results are in restart order."""
    best = None
    for index, (model, score) in enumerate(results):
        logger.debug("Restart %d: %.12f", index, score)
        if best is None or (score > best[1] if maximize else score < best[1]):
            best = (model, score)
    return best


def _check_restarts(restarts: int, *cardinalities: int):
    if restarts < 1:
        raise InvalidModelError(f"Need at least one restart, got {restarts}")
    if min(cardinalities) < 1:
        raise InvalidModelError(f"Hidden-variable cardinalities must be positive, got {cardinalities}")


def _initial_tables(rng: np.random.Generator, cardinality: int, restart: int) -> np.ndarray:
    if restart == 0 or cardinality >= 4:
        return canonical_tables(cardinality)
    return rng.integers(0, 2, size=(cardinality, 2))


def _initial_weights(rng: np.random.Generator, shape: typing.Tuple[int, ...], restart: int) -> np.ndarray:
    if restart == 0:
        return np.full(shape, 1.0 / shape[-1])
    return rng.dirichlet(np.ones(shape[-1]), size=shape[:-1] or None)


def model_b(dist: TripartiteDistribution) -> float:
    """B of a model distribution, through the same evaluation path as quantum data."""
    return bilocal_parameter(ij_for(dist))


def maximize_b_bilocal(
    scenario: str = "14",
    k1: int = 4,
    k2: int = 4,
    restarts: int = 64,
    iterations: int = 200,
    seed: typing.Optional[int] = None,
    workers: int = 1,
) -> typing.Tuple[BilocalModel, float]:
    """Searches for the bilocal model with the largest B.

    :param scenario: Scenario whose Bob alphabet and inequality are used.
    :param k1: Cardinality of λ₁.
    :param k2: Cardinality of λ₂.
    :param restarts: Independent starting points; restart 0 starts from uniform weights and rows.
    :param iterations: Maximum number of sweeps per restart.
    :param seed: Seed of the per-restart random streams.
    :param workers: Restarts run concurrently on this many threads.
    :return: The best model and its B, re-evaluated through :func:`~bilocaltk.lhv.models.eval_bilocal`.
    """
    _check_restarts(restarts, k1, k2)
    name = get_scenario(scenario).config_name
    weights = bob_weights(get_scenario(scenario).ideal_bob().labels)
    b_arity = weights.shape[1]
    streams = spawn_generators(seed, restarts)

    def restart(index: int) -> typing.Tuple[BilocalModel, float]:
        rng = streams[index]
        alice = _initial_tables(rng, k1, index)
        charlie = _initial_tables(rng, k2, index)
        q1 = _initial_weights(rng, (k1,), index)
        q2 = _initial_weights(rng, (k2,), index)
        rows = _initial_weights(rng, (k1, k2, b_arity), index)

        alpha, beta = _signs(alice)
        gamma, delta = _signs(charlie)
        i_coefficients = np.outer(alpha, gamma)
        j_coefficients = np.outer(beta, delta)

        def ij():
            return (
                float(q1 @ (i_coefficients * (rows @ weights[0])) @ q2),
                float(q1 @ (j_coefficients * (rows @ weights[1])) @ q2),
            )

        blocks = [(q1, ()), (q2, ())] + [(rows, (i, j)) for i in range(k1) for j in range(k2)]
        _ascend(blocks, ij, iterations)

        model = BilocalModel(q1, q2, alice, rows, charlie)
        return model, model_b(eval_bilocal(model, b_arity, name))

    model, best_b = _best(_run_restarts(restart, restarts, workers))
    logger.info("Best bilocal B for scenario %s over %d restarts: %.12f", name, restarts, best_b)
    return model, best_b


def maximize_b_local(
    scenario: str = "14",
    k: int = 8,
    restarts: int = 64,
    iterations: int = 200,
    seed: typing.Optional[int] = None,
    workers: int = 1,
) -> typing.Tuple[LocalModel, float]:
    """Searches for the local (single hidden variable) model with the largest B.

    Local models are not bound by B ≤ 1; the supremum is √2.
    """
    _check_restarts(restarts, k)
    name = get_scenario(scenario).config_name
    weights = bob_weights(get_scenario(scenario).ideal_bob().labels)
    b_arity = weights.shape[1]
    streams = spawn_generators(seed, restarts)

    def restart(index: int) -> typing.Tuple[LocalModel, float]:
        rng = streams[index]
        if index == 0 or k >= 4:
            alice, charlie = canonical_local_tables(k)
        else:
            alice, charlie = rng.integers(0, 2, size=(2, k, 2))
        q = _initial_weights(rng, (k,), index)
        rows = _initial_weights(rng, (k, b_arity), index)

        alpha, beta = _signs(alice)
        gamma, delta = _signs(charlie)
        i_coefficients = alpha * gamma
        j_coefficients = beta * delta

        def ij():
            return (
                float(q @ (i_coefficients * (rows @ weights[0]))),
                float(q @ (j_coefficients * (rows @ weights[1]))),
            )

        blocks = [(q, ())] + [(rows, (i,)) for i in range(k)]
        _ascend(blocks, ij, iterations)

        model = LocalModel(q, alice, rows, charlie)
        return model, model_b(eval_local(model, b_arity, name))

    model, best_b = _best(_run_restarts(restart, restarts, workers))
    logger.info("Best local B for scenario %s over %d restarts: %.12f", name, restarts, best_b)
    return model, best_b


class _Fit:
    """Least-squares fit of one bilocal model with fixed response tables to a target table.

    The model table is linear in the joint masses N[λ₁, λ₂, b] = q₁(λ₁) q₂(λ₂) P(b|λ₁, λ₂), which
    live on scaled simplices once q₁ and q₂ are fixed. Bob's rows, q₁ and q₂ are updated in turn,
    each by an exact convex least-squares solve; cells are flattened to (x, z, a, c) × b.
    """

    def __init__(self, target: np.ndarray, alice, charlie, q1, q2, rows):
        self.alice = alice
        self.charlie = charlie
        self.q1 = q1
        self.q2 = q2
        self.rows = rows
        k1, k2, b_arity = rows.shape
        design = np.einsum("ixa,jzc->xzacij", np.eye(2)[alice], np.eye(2)[charlie])
        self._design = design.reshape(16, k1 * k2)
        self._design3 = design.reshape(16, k1, k2)
        self._target = target.transpose(0, 1, 2, 4, 3).reshape(16, b_arity)
        self._mass_lipschitz = float(np.linalg.eigvalsh(self._design.T @ self._design).max())

    def masses(self) -> np.ndarray:
        k1, k2, b_arity = self.rows.shape
        return (np.outer(self.q1, self.q2)[..., None] * self.rows).reshape(k1 * k2, b_arity)

    def distance2(self) -> float:
        return float(((self._design @ self.masses() - self._target) ** 2).sum())

    def row_step(self):
        """Bob's rows for fixed weights; rows of vanishing weight point along the steepest descent."""
        k1, k2, b_arity = self.rows.shape
        scale = np.outer(self.q1, self.q2).ravel()
        masses, _ = _projected_least_squares(
            self.masses(),
            lambda n: self._design @ n,
            lambda r: self._design.T @ r,
            self._target,
            scale,
            self._mass_lipschitz,
            INNER_ITERATIONS,
        )
        rows = self.rows.reshape(k1 * k2, b_arity).copy()
        live = scale > ATOL_CLAMP
        rows[live] = simplex_projection(masses[live] / scale[live, None])
        if not live.all():
            gradient = self._design.T @ (self._design @ masses - self._target)
            rows[~live] = np.eye(b_arity)[np.argmin(gradient[~live], axis=1)]
        self.rows[...] = rows.reshape(self.rows.shape)

    def _weight_step(self, weights: np.ndarray, columns: np.ndarray):
        """Exact update of one weight vector; *columns* holds the model table per unit weight."""
        flat = columns.reshape(len(weights), -1)
        target = self._target.reshape(1, -1)
        solution, _ = _projected_least_squares(
            weights[None, :],
            lambda q: q @ flat,
            lambda r: r @ flat.T,
            target,
            np.ones(1),
            float(np.linalg.eigvalsh(flat @ flat.T).max()),
            INNER_ITERATIONS,
        )
        weights[:] = solution[0]

    def weight_step(self):
        self._weight_step(self.q1, np.einsum("cij,j,ijb->icb", self._design3, self.q2, self.rows))
        self._weight_step(self.q2, np.einsum("cij,i,ijb->jcb", self._design3, self.q1, self.rows))

    def run(self, iterations: int) -> float:
        distance2 = self.distance2()
        for _ in range(iterations):
            self.row_step()
            self.weight_step()
            improved = self.distance2()
            if improved < FIT_TOLERANCE**2 or distance2 - improved < CONVERGENCE_TOL * FIT_TOLERANCE:
                return math.sqrt(improved)
            distance2 = improved
        return math.sqrt(distance2)


def _marginal_weights(table: np.ndarray, marginals: np.ndarray) -> np.ndarray:
    """Weights proportional to Π_input P(table[λ, input] | input), uniform if they all vanish."""
    weights = marginals[[0, 1], table].prod(axis=1)
    if weights.sum() <= 0:
        return np.full(len(table), 1.0 / len(table))
    return weights / weights.sum()


def fit_bilocal(
    target: TripartiteDistribution,
    k1: int = 8,
    k2: int = 8,
    restarts: int = 4,
    iterations: int = 200,
    seed: typing.Optional[int] = None,
    workers: int = 1,
) -> typing.Tuple[BilocalModel, float]:
    """Finds the bilocal model closest to *target* in Euclidean distance over all (x, z, a, b, c) cells.

    Bob's rows, q₁ and q₂ are updated in turn, each by an exact least-squares solve over its
    simplex with the other two fixed. Restart 0 starts from the cycled deterministic strategies
    weighted by the product of the target's end-node marginals, the others from random weights.

    :return: The best model and ‖P_model − P_target‖₂, re-evaluated through
        :func:`~bilocaltk.lhv.models.eval_bilocal`.
    """
    _check_restarts(restarts, k1, k2)
    b_arity = target.b_arity
    streams = spawn_generators(seed, restarts)
    table = np.array(target.table)
    alice_marginals = table[:, 0].sum(axis=(2, 3))
    charlie_marginals = table[0].sum(axis=(1, 2))

    def restart(index: int) -> typing.Tuple[BilocalModel, float]:
        rng = streams[index]
        alice = _initial_tables(rng, k1, index)
        charlie = _initial_tables(rng, k2, index)
        if index == 0:
            q1 = _marginal_weights(alice, alice_marginals)
            q2 = _marginal_weights(charlie, charlie_marginals)
        else:
            q1 = _initial_weights(rng, (k1,), index)
            q2 = _initial_weights(rng, (k2,), index)
        fit = _Fit(table, alice, charlie, q1, q2, _initial_weights(rng, (k1, k2, b_arity), index))
        fit.run(iterations)
        model = BilocalModel(fit.q1, fit.q2, fit.alice, fit.rows, fit.charlie)
        dist = eval_bilocal(model, b_arity, target.scenario)
        return model, float(np.linalg.norm(dist.table - target.table))

    model, distance = _best(_run_restarts(restart, restarts, workers), maximize=False)
    logger.info("Best bilocal fit over %d restarts: distance %.3e", restarts, distance)
    return model, distance
