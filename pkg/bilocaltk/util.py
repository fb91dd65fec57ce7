import io
import json
import typing

import numpy as np

from bilocaltk.exceptions import VisibilityOutOfRange

ATOL_STATE = 1e-10
"""Tolerance for Hermiticity, trace and positivity checks."""
ATOL_DERIVED = 1e-9
"""Tolerance for derived equalities (normalization, no-signaling)."""
ATOL_CLAMP = 1e-12
"""Negative probabilities above this magnitude are treated as errors, below it they are clamped."""

SCHEMA_VERSION = 1
CSV_PRECISION = 6


def check_range(
    value: float, name: str = "v", low: float = 0.0, high: float = 1.0
) -> float:
    """Returns *value* as float if it lies in [low, high].

    :param value: The value to check.
    :param name: Parameter name used in the error message.
    :raises: :class:`~bilocaltk.exceptions.VisibilityOutOfRange` If the value is out of range or not finite.
    """
    value = float(value)
    if not np.isfinite(value) or value < low or value > high:
        raise VisibilityOutOfRange(value, name, low, high)
    return value


def spawn_generators(
    seed: typing.Union[int, None, np.random.SeedSequence], count: int
) -> typing.List[np.random.Generator]:
    """Creates *count* independent random streams from one 64-bit seed.

    The same seed always yields the same streams, in the same order.
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    children = seed.spawn(count)
    return [np.random.default_rng(child) for child in children]


class ConfigurableMixin:
    """Mixin that configurable base classes should inherit from.

    Each configurable base class must have its own :attr:`subclasses`
    attribute, which is used to track the actual configurable implementations.
    Each configurable implementation must set the attribute :attr:`config_name`
    which is used as the key in the :func:`config_mapping`.
    """

    subclasses: typing.Optional[list]

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if getattr(cls, "config_name", None):
            cls.subclasses.append(cls)

    @classmethod
    def config_mapping(cls) -> typing.Dict[str, typing.Type["ConfigurableMixin"]]:
        """Class method that maps :attr:`config_name` attributes to the actual class object.

        :return: Mapping from config names to the actual class objects.
        """
        return {
            configurable.config_name: configurable for configurable in cls.subclasses
        }


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _finite(value):
    """Replaces NaN and infinities by None."""
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(item) for item in value]
    if isinstance(value, np.ndarray):
        return _finite(value.tolist())
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return None
    return value


def dumps_json(report: dict) -> str:
    """Serializes a report to JSON with full double precision and a schema version.

    Non-finite numbers are written as ``null``.
    """
    payload = {"schema_version": SCHEMA_VERSION}
    payload.update(report)
    text = json.dumps(_finite(payload), default=_json_default, indent=2, sort_keys=False, allow_nan=False)
    return text + "\n"


def dumps_csv(header: typing.Sequence[str], rows: typing.Iterable[typing.Sequence]) -> str:
    """Renders rows as CSV: ``,`` delimiter, ``.`` decimal point, fixed 6 decimals, LF endings.

    Booleans are written as ``true``/``false``, missing values as empty cells, integers and strings verbatim.
    """

    def cell(value):
        if value is None:
            return ""
        if isinstance(value, (bool, np.bool_)):
            return "true" if value else "false"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return f"{float(value):.{CSV_PRECISION}f}"
        return str(value)

    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(cell(value) for value in row) + "\n")
    return out.getvalue()
