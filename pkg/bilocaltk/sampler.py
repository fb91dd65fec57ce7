"""Finite statistics: coincidence counts, white-noise injection, detector imbalance and bootstrap errors.

Random streams are derived from a single 64-bit seed with :class:`numpy.random.SeedSequence`;
every stochastic step draws from its own child stream, so a seed reproduces a run bit-exactly.
"""
import logging
import typing
from dataclasses import dataclass, field, replace

import numpy as np

from bilocaltk.exceptions import HeraldNeverFires, InvalidCountsError, VisibilityOutOfRange
from bilocaltk.inequalities import ChshConfig, chsh_table, ij_table
from bilocaltk.measurements import ScenarioName
from bilocaltk.network import DEFAULT_LABELS, TripartiteDistribution
from bilocaltk.scenario import Scenario, exact_prediction, get_scenario
from bilocaltk.util import check_range, spawn_generators

logger = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP_ROUNDS = 1000
MIN_BOOTSTRAP_ROUNDS = 100


@dataclass(frozen=True, eq=False)
class CountsTable:
    """Four-fold coincidence counts ``counts[x, z, a, b, c]`` with a fixed number of trials per setting."""

    scenario: str
    counts: np.ndarray
    trials_per_setting: int
    labels: typing.Tuple[str, ...] = None

    def __post_init__(self):
        counts = np.array(self.counts)
        if counts.ndim != 5 or counts.shape[:3] != (2, 2, 2) or counts.shape[4] != 2:
            raise InvalidCountsError(f"Counts table has shape {counts.shape}")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.array_equal(counts, np.round(counts)):
                raise InvalidCountsError("Counts must be integers")
        counts = counts.astype(np.int64)
        if counts.min() < 0:
            raise InvalidCountsError("Counts must be non-negative")
        if not np.all(counts.sum(axis=(2, 3, 4)) == self.trials_per_setting):
            raise InvalidCountsError(
                f"Settings do not all hold {self.trials_per_setting} trials: "
                f"{counts.sum(axis=(2, 3, 4)).ravel()}"
            )

        labels = self.labels if self.labels is not None else DEFAULT_LABELS.get(counts.shape[3])
        if labels is None or len(labels) != counts.shape[3]:
            raise InvalidCountsError(f"No outcome labels for a Bob alphabet of size {counts.shape[3]}")

        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "labels", tuple(labels))
        object.__setattr__(self, "trials_per_setting", int(self.trials_per_setting))

    @property
    def b_arity(self) -> int:
        return self.counts.shape[3]

    def frequencies(self) -> np.ndarray:
        """Empirical P(a, b, c | x, z)."""
        if self.trials_per_setting < 1:
            raise InvalidCountsError("The counts table is empty")
        return self.counts / self.trials_per_setting

    def replace(self, counts: np.ndarray) -> "CountsTable":
        return CountsTable(self.scenario, counts, self.trials_per_setting, self.labels)


def _apportion(weights: np.ndarray, n: int) -> np.ndarray:
    """Integer counts summing to n, proportional to *weights* (largest remainder)."""
    exact = weights / weights.sum() * n
    counts = np.floor(exact).astype(np.int64)
    remainder = n - counts.sum()
    if remainder:
        # stable sort keeps the lowest index first on ties
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def simulate_counts(dist: TripartiteDistribution, n: int, rng: np.random.Generator) -> CountsTable:
    """Draws one multinomial sample of size n over the (a, b, c) cells of every setting.

    :param dist: The distribution to sample from.
    :param n: Trials per setting, at least 1.
    :param rng: The random stream.
    """
    if n < 1:
        raise InvalidCountsError(f"Need at least one trial per setting, got {n}")
    counts = np.zeros(dist.table.shape, dtype=np.int64)
    for x in (0, 1):
        for z in (0, 1):
            cells = dist.for_setting(x, z)
            probabilities = cells.ravel() / cells.sum()
            counts[x, z] = rng.multinomial(n, probabilities).reshape(cells.shape)
    return CountsTable(dist.scenario, counts, n, dist.labels)


def counts_from_probabilities(dist: TripartiteDistribution, n: int) -> CountsTable:
    """Expected counts without sampling noise, rounded per setting to keep n trials."""
    counts = np.zeros(dist.table.shape, dtype=np.int64)
    for x in (0, 1):
        for z in (0, 1):
            cells = dist.for_setting(x, z)
            counts[x, z] = _apportion(cells.ravel(), n).reshape(cells.shape)
    return CountsTable(dist.scenario, counts, n, dist.labels)


def flip_probability(v_target: float, v_max: float) -> float:
    """Flip probability that lowers the visibility from v_max to v_target.

    Flipping Alice's outcome with probability p multiplies every correlator involving a by
    1 − 2p, hence p = (1 − v_target/v_max)/2.

    :raises: :class:`~bilocaltk.exceptions.VisibilityOutOfRange` If v_target is not in [0, v_max].
    """
    v_max = check_range(v_max, "v_max")
    if v_max == 0:
        raise VisibilityOutOfRange(v_max, "v_max", 0.0, 1.0)
    v_target = check_range(v_target, "v_target", 0.0, v_max)
    return (1 - v_target / v_max) / 2


def flip_noise(counts: CountsTable, p: float, rng: np.random.Generator) -> CountsTable:
    """Relabels each recorded event a → 1 − a independently with probability p.

    :raises: :class:`~bilocaltk.exceptions.VisibilityOutOfRange` If p is outside [0, ½].
    """
    p = check_range(p, "p", 0.0, 0.5)
    if p == 0:
        return counts
    flipped = rng.binomial(counts.counts, p)
    logger.debug("Flipped %d of %d events (p=%.6f)", flipped.sum(), counts.counts.sum(), p)
    return counts.replace(counts.counts - flipped + flipped[:, :, ::-1])


def symmetrize(counts: CountsTable, b_map: typing.Optional[typing.Sequence[int]] = None) -> CountsTable:
    """Relabels the first half of every cell's events with a → 1 − a, c → 1 − c, b → b_map[b].

    *b_map* is Bob's outcome-negation map (see
    :func:`~bilocaltk.measurements.bob_negation_map`), the identity for Bell state
    measurements. Correlators containing both a and c are unchanged while the single-party
    marginals are balanced.

    :raises: :class:`~bilocaltk.exceptions.InvalidCountsError` If the number of trials per setting is odd.
    """
    if counts.trials_per_setting % 2:
        raise InvalidCountsError(f"Cannot split {counts.trials_per_setting} trials into halves")
    b_map = list(range(counts.b_arity)) if b_map is None else list(b_map)
    if sorted(b_map) != list(range(counts.b_arity)):
        raise InvalidCountsError(f"{b_map} is not a permutation of Bob's outcomes")

    moved = counts.counts // 2
    relabeled = np.zeros_like(moved)
    relabeled[:, :, :, b_map, :] = moved[:, :, ::-1, :, ::-1]
    return counts.replace(counts.counts - moved + relabeled)


@dataclass(frozen=True)
class DetectorEfficiencies:
    """Relative detection efficiency of each outcome's detector for Alice and Charlie."""

    alice: typing.Tuple[float, float] = (1.0, 1.0)
    charlie: typing.Tuple[float, float] = (1.0, 1.0)

    def weights(self, swap_half: bool = False) -> np.ndarray:
        """Cell weights ``w[a, c]``.

        With *swap_half*, each party's detectors are exchanged on half of the trials (chosen
        independently per party) and the outcomes relabeled back, so every outcome sees the
        mean efficiency.
        """
        alice = np.asarray(self.alice, dtype=float)
        charlie = np.asarray(self.charlie, dtype=float)
        if swap_half:
            alice = np.full(2, alice.mean())
            charlie = np.full(2, charlie.mean())
        return np.outer(alice, charlie)


def inject_detector_bias(
    counts: CountsTable, efficiencies: DetectorEfficiencies, swap_half: bool = False
) -> CountsTable:
    """Scales every cell by its detector weight and renormalizes each setting to the same trial count."""
    weights = efficiencies.weights(swap_half)[:, None, :]
    biased = np.zeros_like(counts.counts)
    for x in (0, 1):
        for z in (0, 1):
            cells = counts.counts[x, z] * weights
            if cells.sum() > 0:
                biased[x, z] = _apportion(cells.ravel(), counts.trials_per_setting).reshape(cells.shape)
    return counts.replace(biased)


@dataclass(frozen=True)
class EstimateReport:
    """Point estimates with bootstrap standard deviations."""

    scenario: str
    i_hat: float
    j_hat: float
    b_hat: float
    i_sigma: float
    j_sigma: float
    b_sigma: float
    effective_visibility: float
    trials_per_setting: int
    bootstrap_rounds: int
    seed: typing.Optional[int] = None
    chsh_hat: typing.Optional[float] = None
    chsh_sigma: typing.Optional[float] = None
    extra: dict = field(default_factory=dict)

    def interval(self, z: float = 1.96) -> typing.Tuple[float, float]:
        return self.b_hat - z * self.b_sigma, self.b_hat + z * self.b_sigma

    def as_dict(self) -> dict:
        report = {
            "scenario": self.scenario,
            "I": self.i_hat,
            "I_sigma": self.i_sigma,
            "J": self.j_hat,
            "J_sigma": self.j_sigma,
            "B": self.b_hat,
            "B_sigma": self.b_sigma,
            "CHSH": self.chsh_hat,
            "CHSH_sigma": self.chsh_sigma,
            "effective_visibility": self.effective_visibility,
            "seed": self.seed,
            "trials_per_setting": self.trials_per_setting,
            "bootstrap_rounds": self.bootstrap_rounds,
        }
        report.update(self.extra)
        return report


def _bootstrap_tables(counts: CountsTable, rounds: int, seed) -> np.ndarray:
    frequencies = counts.frequencies()
    replicas = np.empty((rounds,) + frequencies.shape)
    streams = spawn_generators(seed, 4)
    for k, (x, z) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        cells = frequencies[x, z]
        draws = streams[k].multinomial(counts.trials_per_setting, cells.ravel(), size=rounds)
        replicas[:, x, z] = draws.reshape((rounds,) + cells.shape) / counts.trials_per_setting
    return replicas


def _has_chsh(counts: CountsTable, chsh_config: typing.Optional[ChshConfig]) -> bool:
    return chsh_config is not None or counts.scenario == ScenarioName.CHSH.value


def _chsh_values(tables: np.ndarray, counts: CountsTable, config: ChshConfig) -> np.ndarray:
    """CHSH of one or many tables; NaN where some setting never saw the herald."""
    if config.herald not in counts.labels:
        raise HeraldNeverFires(config.herald, 0.0)
    herald = counts.labels.index(config.herald)
    heralded = tables[..., herald, :].sum(axis=(-2, -1))
    valid = np.all(heralded > 0, axis=(-2, -1))
    if valid.ndim == 0:
        return chsh_table(tables, counts.labels, config) if valid else np.array(np.nan)

    values = np.full(valid.shape, np.nan)
    if np.any(valid):
        values[valid] = chsh_table(tables[valid], counts.labels, config)
    return values


def estimate(
    counts: CountsTable,
    bootstrap_rounds: int = DEFAULT_BOOTSTRAP_ROUNDS,
    seed: typing.Union[int, None, np.random.SeedSequence] = None,
    chsh_config: typing.Optional[ChshConfig] = None,
) -> EstimateReport:
    """Estimates I, J, B (and CHSH) from counts, with per-setting multinomial bootstrap errors.

    :param counts: The coincidence counts.
    :param bootstrap_rounds: Number of bootstrap replicas, at least 100.
    :param seed: Seed of the bootstrap streams.
    :param chsh_config: Herald and signs of the CHSH estimate; CHSH tables use the default
        configuration when omitted.
    :raises: :class:`~bilocaltk.exceptions.InvalidCountsError` If the table is empty or the number of
        rounds is too small.
    """
    if bootstrap_rounds < MIN_BOOTSTRAP_ROUNDS:
        raise InvalidCountsError(f"Need at least {MIN_BOOTSTRAP_ROUNDS} bootstrap rounds")
    frequencies = counts.frequencies()

    i_hat, j_hat = (float(value) for value in ij_table(frequencies, counts.labels))
    b_hat = float(np.sqrt(abs(i_hat)) + np.sqrt(abs(j_hat)))

    replicas = _bootstrap_tables(counts, bootstrap_rounds, seed)
    i_boot, j_boot = ij_table(replicas, counts.labels)
    b_boot = np.sqrt(np.abs(i_boot)) + np.sqrt(np.abs(j_boot))

    chsh_hat = chsh_sigma = None
    if _has_chsh(counts, chsh_config):
        config = chsh_config or ChshConfig()
        point = float(_chsh_values(frequencies, counts, config))
        if np.isfinite(point):
            chsh_hat = point
            spread = _chsh_values(replicas, counts, config)
            if np.count_nonzero(np.isfinite(spread)) > 1:
                chsh_sigma = float(np.nanstd(spread, ddof=1))
        elif counts.scenario == ScenarioName.CHSH.value:
            raise HeraldNeverFires(config.herald, 0.0)
        else:
            logger.warning("Herald %s missing in some setting, CHSH is not estimated", config.herald)

    scenario: Scenario = get_scenario(counts.scenario)
    if counts.scenario == ScenarioName.CHSH.value:
        visibility = scenario.visibility_from_value(chsh_hat)
    else:
        visibility = scenario.visibility_from_value(b_hat)

    return EstimateReport(
        scenario=counts.scenario,
        i_hat=i_hat,
        j_hat=j_hat,
        b_hat=b_hat,
        i_sigma=float(np.std(i_boot, ddof=1)),
        j_sigma=float(np.std(j_boot, ddof=1)),
        b_sigma=float(np.std(b_boot, ddof=1)),
        effective_visibility=float(visibility),
        trials_per_setting=counts.trials_per_setting,
        bootstrap_rounds=bootstrap_rounds,
        seed=seed if isinstance(seed, (int, type(None))) else None,
        chsh_hat=chsh_hat,
        chsh_sigma=chsh_sigma,
    )


def synthetic_experiment(
    scenario: str,
    n: int,
    seed: typing.Optional[int] = None,
    v1: float = 1.0,
    v2: float = 1.0,
    v_b: float = 1.0,
    v_target: typing.Optional[float] = None,
    bootstrap_rounds: int = DEFAULT_BOOTSTRAP_ROUNDS,
    symmetrized: bool = False,
) -> EstimateReport:
    """Exact network → multinomial counts → flip noise → estimate.

    The network runs at v_max = v₁·v₂·v_b; if *v_target* is given, Alice's outcomes are flipped
    to bring the effective visibility down to it. Without a seed a fresh one is drawn and
    recorded in the report so the run can be replayed.
    """
    if seed is None:
        seed = int(np.random.default_rng().integers(2**63))
    prediction = exact_prediction(scenario, v1, v2, v_b)
    v_max = prediction.v_effective
    p = flip_probability(v_target, v_max) if v_target is not None else 0.0

    counts_seed, flip_seed, bootstrap_seed = np.random.SeedSequence(seed).spawn(3)

    counts = simulate_counts(prediction.distribution, n, np.random.default_rng(counts_seed))
    logger.info("Simulated %d trials per setting, flip probability %.6f", n, p)
    counts = flip_noise(counts, p, np.random.default_rng(flip_seed))
    if symmetrized:
        counts = symmetrize(counts)

    v_effective = v_target if v_target is not None else v_max
    report = estimate(counts, bootstrap_rounds, bootstrap_seed)
    return replace(
        report,
        seed=seed,
        extra={
            "v_max": v_max,
            "v_target": v_effective,
            "flip_probability": p,
            "predicted": get_scenario(scenario).predicted(v_effective),
        },
    )


def simulated_sweep(
    scenario: str,
    visibilities: typing.Sequence[float],
    n: int,
    seed: typing.Optional[int] = None,
    v1: float = 1.0,
    v2: float = 1.0,
    v_b: float = 1.0,
    bootstrap_rounds: int = DEFAULT_BOOTSTRAP_ROUNDS,
) -> typing.Tuple[int, typing.List[EstimateReport]]:
    """Runs one synthetic experiment per target visibility, lowering v₁·v₂·v_b by flip noise.

    The i-th point draws from the i-th child stream of *seed*.

    :return: The seed that was used and one report per visibility.
    :raises: :class:`~bilocaltk.exceptions.VisibilityOutOfRange` If a visibility exceeds v₁·v₂·v_b.
    """
    if seed is None:
        seed = int(np.random.default_rng().integers(2**63))
    children = np.random.SeedSequence(seed).spawn(len(visibilities))
    reports = []
    for v_target, child in zip(visibilities, children):
        reports.append(
            synthetic_experiment(
                scenario,
                n,
                seed=int(child.generate_state(1, np.uint64)[0]),
                v1=v1,
                v2=v2,
                v_b=v_b,
                v_target=float(v_target),
                bootstrap_rounds=bootstrap_rounds,
            )
        )
        logger.debug("Sweep point v=%.6f: B=%.6f ± %.6f", v_target, reports[-1].b_hat, reports[-1].b_sigma)
    return seed, reports
