"""Dense complex linear algebra and canonical two-level quantum objects.

All operators live on at most four qubits and are ordered globally as
A ⊗ B₁ ⊗ B₂ ⊗ C (big-endian, the left factor is the most significant subsystem).
The computational state :math:`|0⟩` is the +1 eigenvector of σz.
"""
import enum
import functools
import logging
import typing
from dataclasses import dataclass

import numpy as np

from bilocaltk.exceptions import DimensionMismatch, InvalidStateError
from bilocaltk.util import ATOL_STATE, check_range

logger = logging.getLogger(__name__)

MAX_QUBITS = 4

IDENTITY_2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_PAULI = {"I": IDENTITY_2, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}


class BellState(str, enum.Enum):
    """The four canonical Bell states.

    Subclassing :class:`str` simplifies json serialization using :func:`json.dumps`.
    """

    PHI_PLUS = "phi+"
    """(|00⟩ + |11⟩)/√2"""
    PHI_MINUS = "phi-"
    """(|00⟩ − |11⟩)/√2"""
    PSI_PLUS = "psi+"
    """(|01⟩ + |10⟩)/√2"""
    PSI_MINUS = "psi-"
    """(|01⟩ − |10⟩)/√2, the singlet"""


def _frozen(matrix) -> np.ndarray:
    array = np.array(matrix, dtype=complex)
    array.flags.writeable = False
    return array


def _n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim))) if dim > 0 else -1
    if n < 0 or 2**n != dim or n > MAX_QUBITS:
        raise DimensionMismatch(f"Dimension {dim} is not 2^n for 0 <= n <= {MAX_QUBITS}")
    return n


def _check_square(matrix: np.ndarray, name="matrix") -> np.ndarray:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {matrix.shape}")
    return matrix


def pauli(label: str) -> np.ndarray:
    """Returns the Pauli matrix for one of ``I``, ``X``, ``Y``, ``Z``."""
    try:
        return _PAULI[label.upper()]
    except KeyError:
        raise InvalidStateError(f"Unknown Pauli label {label}")


def tensor(*operators: np.ndarray) -> np.ndarray:
    """Kronecker product of square matrices, left factor most significant.

    :param operators: Two or more square matrices.
    :return: The product, of dimension equal to the product of the factor dimensions.
    """
    return functools.reduce(
        np.kron, [_check_square(op, "tensor factor") for op in operators]
    )


def ket(bits: str) -> np.ndarray:
    """Returns the computational basis vector for a bit-string such as ``"01"``."""
    if not bits or set(bits) - {"0", "1"}:
        raise InvalidStateError(f"Not a bit-string: {bits!r}")
    vector = np.zeros(2 ** len(bits), dtype=complex)
    vector[int(bits, 2)] = 1.0
    return vector


def projector(vector: np.ndarray) -> np.ndarray:
    """Returns |ψ⟩⟨ψ| for a (not necessarily normalized) vector."""
    vector = np.asarray(vector, dtype=complex).ravel()
    norm = np.linalg.norm(vector)
    if norm < ATOL_STATE:
        raise InvalidStateError("Cannot build a projector from the zero vector")
    vector = vector / norm
    return np.outer(vector, vector.conj())


def apply_global_phase(vector: np.ndarray, phi: float) -> np.ndarray:
    """Multiplies a state vector by e^{iφ}."""
    return np.exp(1j * phi) * np.asarray(vector, dtype=complex)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Unit-trace positive-semidefinite matrix on 1 to 4 qubits.

    Instances are immutable; the wrapped array is read-only.
    """

    matrix: np.ndarray

    def __post_init__(self):
        matrix = _frozen(_check_square(self.matrix, "density matrix"))
        _n_qubits(matrix.shape[0])

        if not np.allclose(matrix, matrix.conj().T, rtol=0, atol=ATOL_STATE):
            raise InvalidStateError("Density matrix is not Hermitian")
        if abs(np.trace(matrix) - 1) > ATOL_STATE:
            raise InvalidStateError(f"Density matrix has trace {np.trace(matrix).real}")
        if (low := np.linalg.eigvalsh(matrix).min()) < -ATOL_STATE:
            raise InvalidStateError(f"Density matrix has negative eigenvalue {low}")

        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "DensityMatrix":
        """Returns the pure state of a state vector (normalized on the way)."""
        return cls(projector(vector))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.dim)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def expectation(self, operator: np.ndarray) -> float:
        """Returns the real part of tr(ρ·O)."""
        return expectation(self, operator)

    def allclose(self, other: "DensityMatrix", atol: float = 1e-9) -> bool:
        return self.dim == other.dim and np.allclose(
            self.matrix, other.matrix, rtol=0, atol=atol
        )

    def __repr__(self):
        return f"<DensityMatrix=(n_qubits={self.n_qubits})>"


def _matrix_of(state: typing.Union[DensityMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(state, DensityMatrix):
        return state.matrix
    return _check_square(state)


def expectation(state: typing.Union[DensityMatrix, np.ndarray], operator: np.ndarray) -> float:
    """Returns the real part of tr(ρ·O)."""
    rho = _matrix_of(state)
    operator = _check_square(operator, "operator")
    if operator.shape != rho.shape:
        raise DimensionMismatch(f"Operator {operator.shape} does not act on state {rho.shape}")
    return float(np.trace(rho @ operator).real)


def partial_trace(
    state: typing.Union[DensityMatrix, np.ndarray],
    keep: typing.Iterable[int],
    dims: typing.Optional[typing.Sequence[int]] = None,
) -> typing.Union[DensityMatrix, np.ndarray]:
    """Traces out every subsystem not listed in *keep*.

    :param state: A density matrix or any square operator.
    :param keep: Indices of the subsystems to keep, in the global ordering.
    :param dims: Subsystem dimensions; defaults to all qubits.
    :return: The reduced operator; a :class:`DensityMatrix` if the input was one.
    :raises: :class:`~bilocaltk.exceptions.DimensionMismatch` If an index is out of range.
    """
    matrix = _matrix_of(state)
    dims = list(dims) if dims is not None else [2] * _n_qubits(matrix.shape[0])
    n = len(dims)
    if int(np.prod(dims)) != matrix.shape[0]:
        raise DimensionMismatch(f"Subsystem dimensions {dims} do not match {matrix.shape}")

    keep = sorted(set(keep))
    if any(i < 0 or i >= n for i in keep):
        raise DimensionMismatch(f"Subsystem index out of range in {keep} for {n} subsystems")

    indices_in = list(range(2 * n))
    for i in range(n):
        if i not in keep:
            indices_in[n + i] = indices_in[i]
    indices_out = keep + [n + i for i in keep]

    kept_dim = int(np.prod([dims[i] for i in keep])) if keep else 1
    reduced = np.einsum(matrix.reshape(dims + dims), indices_in, indices_out).reshape(
        kept_dim, kept_dim
    )

    if isinstance(state, DensityMatrix):
        return DensityMatrix(reduced)
    return reduced


def partial_transpose(
    state: typing.Union[DensityMatrix, np.ndarray],
    subsystems: typing.Iterable[int] = (1,),
    dims: typing.Optional[typing.Sequence[int]] = None,
) -> np.ndarray:
    """Transposes the listed subsystems of an operator."""
    matrix = _matrix_of(state)
    dims = list(dims) if dims is not None else [2] * _n_qubits(matrix.shape[0])
    n = len(dims)
    axes = list(range(2 * n))
    for i in subsystems:
        if i < 0 or i >= n:
            raise DimensionMismatch(f"Subsystem index {i} out of range for {n} subsystems")
        axes[i], axes[n + i] = axes[n + i], axes[i]
    return matrix.reshape(dims + dims).transpose(axes).reshape(matrix.shape)


def min_pt_eigenvalue(
    state: typing.Union[DensityMatrix, np.ndarray], subsystems: typing.Iterable[int] = (1,)
) -> float:
    """Smallest eigenvalue of the partial transpose; ≥ 0 certifies separability for two qubits."""
    pt = partial_transpose(state, subsystems)
    return float(np.linalg.eigvalsh((pt + pt.conj().T) / 2).min())


def is_ppt(state: typing.Union[DensityMatrix, np.ndarray], tol: float = ATOL_STATE) -> bool:
    return min_pt_eigenvalue(state) >= -tol


_BELL_VECTORS = {
    BellState.PHI_PLUS: (ket("00") + ket("11")) / np.sqrt(2),
    BellState.PHI_MINUS: (ket("00") - ket("11")) / np.sqrt(2),
    BellState.PSI_PLUS: (ket("01") + ket("10")) / np.sqrt(2),
    BellState.PSI_MINUS: (ket("01") - ket("10")) / np.sqrt(2),
}


def bell_vector(kind: typing.Union[BellState, str]) -> np.ndarray:
    return _BELL_VECTORS[BellState(kind)].copy()


def bell_state(kind: typing.Union[BellState, str]) -> DensityMatrix:
    """Returns the pure Bell state projector of the given kind."""
    return DensityMatrix.from_vector(bell_vector(kind))


def maximally_mixed(n_qubits: int = 2) -> DensityMatrix:
    dim = 2**n_qubits
    return DensityMatrix(np.eye(dim) / dim)


def werner(kind: typing.Union[BellState, str], v: float) -> DensityMatrix:
    """Returns v·|ψ⟩⟨ψ| + (1−v)·𝟙/4.

    :param kind: The Bell state |ψ⟩.
    :param v: The visibility in [0, 1].
    :raises: :class:`~bilocaltk.exceptions.VisibilityOutOfRange` If v is outside [0, 1].
    """
    v = check_range(v, "v")
    return DensityMatrix(v * bell_state(kind).matrix + (1 - v) * np.eye(4) / 4)


@dataclass(frozen=True, eq=False)
class BlochObservable:
    """Two-outcome qubit measurement; outcome a ∈ {0, 1} carries the eigenvalue (−1)^a."""

    axis: typing.Tuple[float, float, float]
    effect0: np.ndarray
    effect1: np.ndarray

    @property
    def effects(self) -> typing.Tuple[np.ndarray, np.ndarray]:
        return self.effect0, self.effect1

    @property
    def observable(self) -> np.ndarray:
        """effect₀ − effect₁"""
        return self.effect0 - self.effect1

    @property
    def is_trivial(self) -> bool:
        return not any(self.axis)


def _axis_operator(axis) -> np.ndarray:
    return axis[0] * SIGMA_X + axis[1] * SIGMA_Y + axis[2] * SIGMA_Z


def bloch_observable(axis: typing.Sequence[float]) -> BlochObservable:
    """Builds the projective measurement of axis·σ.

    :param axis: A real unit 3-vector (x, y, z).
    :return: effect₀ = (𝟙 + axis·σ)/2, effect₁ = (𝟙 − axis·σ)/2.
    :raises: :class:`~bilocaltk.exceptions.InvalidStateError` If the axis is not a unit vector.
    """
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1) > ATOL_STATE:
        raise InvalidStateError(f"Measurement axis {axis} is not a unit 3-vector")
    operator = _axis_operator(axis)
    return BlochObservable(
        tuple(float(c) for c in axis),
        _frozen((IDENTITY_2 + operator) / 2),
        _frozen((IDENTITY_2 - operator) / 2),
    )


def trivial_observable() -> BlochObservable:
    """The observable 𝟙: outcome 0 with certainty."""
    return BlochObservable((0.0, 0.0, 0.0), _frozen(IDENTITY_2), _frozen(np.zeros((2, 2))))
