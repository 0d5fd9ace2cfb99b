"""Finite-dimensional states and operators for two atoms and a truncated cavity mode.

Basis ordering is fixed: for a qubit, index 0 is ``|g>`` and index 1 is ``|e>``;
for the three-level atom, 0, 1, 2 are ``|g>``, ``|e>``, ``|c>``.  Composite
indices are row-major over the subsystems in signature order, so the state
``|g>|g>|0>`` of the ``[2, 2, n_max + 1]`` space sits at index 0.

All quantities are dense ``complex128`` arrays.  Objects are immutable after
construction (their arrays are flagged read-only).
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import stats

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-9
NORM_TOL = 1e-10
TRUNCATION_TOL = 1e-10

G, E, C = 0, 1, 2


class SignatureError(ValueError):
    """Operands live on incompatible spaces."""


class TruncationError(ValueError):
    """The Fock cutoff is too small for the requested coherent amplitude."""


class StateValidationError(ValueError):
    """A matrix or vector fails the invariants of the state type it claims to be."""


@dataclass(frozen=True)
class SpaceSignature:
    """Ordered subsystem dimensions of a tensor-product space."""

    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise SignatureError(f"invalid subsystem dimensions {self.dims!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    @property
    def n_max(self) -> int:
        """Fock cutoff, assuming the last subsystem is the cavity mode."""
        return self.dims[-1] - 1

    def __len__(self) -> int:
        return len(self.dims)

    def concat(self, other: "SpaceSignature") -> "SpaceSignature":
        return SpaceSignature(self.dims + other.dims)


def _signature(dims: Union[SpaceSignature, Sequence[int], int]) -> SpaceSignature:
    if isinstance(dims, SpaceSignature):
        return dims
    if isinstance(dims, (int, np.integer)):
        return SpaceSignature((int(dims),))
    return SpaceSignature(tuple(dims))


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix tagged with the space it acts on."""

    signature: SpaceSignature
    matrix: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "signature", _signature(self.signature))
        m = _frozen(self.matrix)
        d = self.signature.total
        if m.shape != (d, d):
            raise SignatureError(f"matrix shape {m.shape} does not match dimension {d}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.signature.total

    def dag(self) -> "Operator":
        return Operator(self.signature, self.matrix.conj().T)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def _check(self, other) -> None:
        if self.signature != other.signature:
            raise SignatureError(f"{self.signature.dims} vs {other.signature.dims}")

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.signature, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.signature, self.matrix - other.matrix)

    def __neg__(self) -> "Operator":
        return Operator(self.signature, -self.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.signature, scalar * self.matrix)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.signature, self.matrix @ other.matrix)
        if isinstance(other, PureState):
            self._check(other)
            # result of an operator acting on a ket is generally not normalized
            return self.matrix @ other.amplitudes
        return NotImplemented

    def expect(self, state: Union["PureState", "DensityState"]) -> complex:
        self._check(state)
        if isinstance(state, PureState):
            return complex(np.vdot(state.amplitudes, self.matrix @ state.amplitudes))
        return complex(np.trace(self.matrix @ state.matrix))


@dataclass(frozen=True, eq=False)
class PureState:
    """Unit-norm ket on a tagged space."""

    signature: SpaceSignature
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "signature", _signature(self.signature))
        v = _frozen(self.amplitudes).reshape(-1)
        if v.size != self.signature.total:
            raise SignatureError(f"{v.size} amplitudes for dimension {self.signature.total}")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > NORM_TOL:
            raise StateValidationError(f"state norm {norm!r} is not 1")
        object.__setattr__(self, "amplitudes", v)

    @classmethod
    def normalized(cls, signature, amplitudes) -> "PureState":
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(signature, v / np.linalg.norm(v))

    @property
    def dim(self) -> int:
        return self.signature.total

    def overlap(self, other: "PureState") -> complex:
        if self.signature != other.signature:
            raise SignatureError(f"{self.signature.dims} vs {other.signature.dims}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_density(self) -> "DensityState":
        return DensityState(self.signature, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityState:
    """Trace-one, Hermitian, positive semidefinite matrix on a tagged space."""

    signature: SpaceSignature
    matrix: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "signature", _signature(self.signature))
        m = _frozen(self.matrix)
        d = self.signature.total
        if m.shape != (d, d):
            raise SignatureError(f"matrix shape {m.shape} does not match dimension {d}")
        asym = np.max(np.abs(m - m.conj().T), initial=0.0)
        if asym > HERMITIAN_TOL:
            raise StateValidationError(f"not Hermitian (max |rho - rho^dag| = {asym:.3e})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateValidationError(f"trace {tr!r} differs from 1")
        lo = positivity_margin(m)
        if lo < -POSITIVITY_TOL:
            raise StateValidationError(f"negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_matrix(cls, signature, matrix, renormalize: bool = False, clip: bool = False) -> "DensityState":
        """Build from a nearly Hermitian matrix, symmetrizing away round-off.

        ``clip=True`` zeroes negative eigenvalues (and renormalizes); callers
        use it only after checking the negative part against their own tolerance.
        """
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        if clip:
            w, v = np.linalg.eigh(m)
            if w[0] < 0:
                m = (v * np.clip(w, 0.0, None)) @ v.conj().T
                m = 0.5 * (m + m.conj().T)
                renormalize = True
        if renormalize:
            m = m / np.trace(m).real
        return cls(signature, m)

    @property
    def dim(self) -> int:
        return self.signature.total

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


State = Union[PureState, DensityState]


def positivity_margin(matrix: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part of ``matrix``."""
    m = np.asarray(matrix)
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


# -- constructors -------------------------------------------------------------

def identity(dims) -> Operator:
    sig = _signature(dims)
    return Operator(sig, np.eye(sig.total))


def basis(dim: int, index: int) -> PureState:
    if not 0 <= index < dim:
        raise SignatureError(f"basis index {index} outside dimension {dim}")
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return PureState(SpaceSignature((dim,)), v)


def fock(n: int, n_max: int) -> PureState:
    return basis(n_max + 1, n)


def transition(dim: int, to: int, frm: int) -> Operator:
    """Single-atom transition operator ``|to><frm|``."""
    m = np.zeros((dim, dim), dtype=complex)
    m[to, frm] = 1.0
    return Operator(SpaceSignature((dim,)), m)


def sigma_x() -> Operator:
    """``|g><e| + |e><g|`` on a qubit."""
    return Operator(SpaceSignature((2,)), [[0, 1], [1, 0]])


def sigma_y() -> Operator:
    return Operator(SpaceSignature((2,)), [[0, -1j], [1j, 0]])


def sigma_z() -> Operator:
    return Operator(SpaceSignature((2,)), [[1, 0], [0, -1]])


def sigma_lower() -> Operator:
    """``sigma = |g><e|``."""
    return transition(2, G, E)


def sigma_raise() -> Operator:
    """``sigma^dag = |e><g|``."""
    return transition(2, E, G)


def annihilation(n_max: int) -> Operator:
    """Truncated lowering operator with ``<n-1|a|n> = sqrt(n)``."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    return Operator(SpaceSignature((n_max + 1,)), np.diag(np.sqrt(np.arange(1, n_max + 1)), k=1))


def creation(n_max: int) -> Operator:
    return annihilation(n_max).dag()


def number(n_max: int) -> Operator:
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    return Operator(SpaceSignature((n_max + 1,)), np.diag(np.arange(n_max + 1, dtype=float)))


def poisson_tail(amplitude: complex, n_max: int) -> float:
    """Probability mass of ``|amplitude>`` above the cutoff ``n_max``."""
    return float(stats.poisson.sf(n_max, abs(amplitude) ** 2))


def default_n_max(amplitude: float) -> int:
    """Cutoff rule ``ceil(|A|^2 + 8|A| + 10)`` for the largest amplitude ``A`` in use."""
    a = abs(amplitude)
    return int(math.ceil(a * a + 8 * a + 10))


def coherent_amplitudes(amplitude: complex, n_max: int) -> np.ndarray:
    """Raw truncated amplitudes ``exp(-|a|^2/2) a^n / sqrt(n!)``, not renormalized."""
    c = np.empty(n_max + 1, dtype=complex)
    c[0] = math.exp(-abs(amplitude) ** 2 / 2)
    for n in range(1, n_max + 1):
        c[n] = c[n - 1] * amplitude / math.sqrt(n)
    return c


def coherent_state(amplitude: complex, n_max: int, tol: float = TRUNCATION_TOL) -> PureState:
    """Coherent state truncated at ``n_max`` and renormalized.

    Raises
    ------
    TruncationError
        If the Poisson tail above ``n_max`` is not below ``tol``.
    """
    tail = poisson_tail(amplitude, n_max)
    if tail >= tol:
        raise TruncationError(
            f"|{amplitude}> loses {tail:.2e} probability above n_max={n_max}; "
            f"use n_max >= {default_n_max(amplitude)}"
        )
    return PureState.normalized(SpaceSignature((n_max + 1,)), coherent_amplitudes(amplitude, n_max))


def plus_minus_basis() -> tuple[PureState, PureState]:
    """The ``sigma_x`` eigenbasis ``|+->`` = ``(|g> +- |e>)/sqrt(2)``."""
    s = 1 / math.sqrt(2)
    sig = SpaceSignature((2,))
    return PureState(sig, [s, s]), PureState(sig, [s, -s])


def psi_plus() -> PureState:
    """``(|-+> + |+->)/sqrt(2)``, which equals ``(|gg> - |ee>)/sqrt(2)``."""
    p, m = plus_minus_basis()
    v = tensor(m, p).amplitudes + tensor(p, m).amplitudes
    return PureState(SpaceSignature((2, 2)), v / math.sqrt(2))


def phi_plus() -> PureState:
    """``(|++> + |-->)/sqrt(2)``, which equals ``(|gg> + |ee>)/sqrt(2)``."""
    p, m = plus_minus_basis()
    v = tensor(p, p).amplitudes + tensor(m, m).amplitudes
    return PureState(SpaceSignature((2, 2)), v / math.sqrt(2))


def pm_product(s1: int, s2: int) -> PureState:
    """Two-qubit product ``|s1 s2>`` of sigma_x eigenstates, ``s = +1`` or ``-1``."""
    p, m = plus_minus_basis()
    return tensor(p if s1 > 0 else m, p if s2 > 0 else m)


def maximally_mixed(dims) -> DensityState:
    sig = _signature(dims)
    return DensityState(sig, np.eye(sig.total) / sig.total)


# -- composition --------------------------------------------------------------

def tensor(*items):
    """Kronecker product of operators, kets or density matrices of one kind.

    Accepts either several arguments or a single list.  The signature of the
    result is the concatenation of the operand signatures.
    """
    if len(items) == 1 and isinstance(items[0], (list, tuple)):
        items = tuple(items[0])
    if not items:
        raise ValueError("tensor of nothing")
    kind = type(items[0])
    if kind not in (Operator, PureState, DensityState) or any(type(x) is not kind for x in items):
        raise TypeError(f"cannot tensor {[type(x).__name__ for x in items]}")
    dims: tuple[int, ...] = ()
    if kind is PureState:
        out = np.ones(1, dtype=complex)
        for x in items:
            out = np.kron(out, x.amplitudes)
            dims += x.signature.dims
        return PureState(SpaceSignature(dims), out)
    out = np.ones((1, 1), dtype=complex)
    for x in items:
        out = np.kron(out, x.matrix)
        dims += x.signature.dims
    return kind(SpaceSignature(dims), out)


def embed(op: Operator, position: int, signature) -> Operator:
    """Lift a single-subsystem operator to act on subsystem ``position``."""
    sig = _signature(signature)
    if op.signature.dims != (sig.dims[position],):
        raise SignatureError(f"operator on {op.signature.dims} cannot act on slot {position} of {sig.dims}")
    parts = [identity(d) for d in sig.dims]
    parts[position] = op
    return tensor(parts)


def _reduced_matrix(matrix: np.ndarray, dims: tuple[int, ...], keep: Sequence[int]) -> np.ndarray:
    n = len(dims)
    letters = string.ascii_letters
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    spec = "".join(row) + "".join(col) + "->" + out
    kd = math.prod(dims[i] for i in keep)
    return np.einsum(spec, matrix.reshape(dims + dims)).reshape(kd, kd)


def partial_trace(state: Union[DensityState, PureState], keep: Iterable[int]) -> DensityState:
    """Reduced density matrix on the subsystems listed in ``keep`` (order preserved)."""
    if isinstance(state, PureState):
        state = state.to_density()
    dims = state.signature.dims
    keep = sorted(set(int(k) for k in keep))
    if not keep or keep[0] < 0 or keep[-1] >= len(dims):
        raise SignatureError(f"invalid subsystems {keep} for {dims}")
    m = _reduced_matrix(np.asarray(state.matrix), dims, keep)
    return DensityState.from_matrix(SpaceSignature(tuple(dims[i] for i in keep)), m)


def fidelity_pure(target: PureState, state: Union[DensityState, PureState]) -> float:
    """``<target|rho|target>`` for a pure target."""
    if target.signature != state.signature:
        raise SignatureError(f"{target.signature.dims} vs {state.signature.dims}")
    if isinstance(state, PureState):
        return abs(np.vdot(target.amplitudes, state.amplitudes)) ** 2
    value = np.vdot(target.amplitudes, state.matrix @ target.amplitudes)
    if abs(value.imag) > 1e-12:
        raise StateValidationError(f"fidelity has imaginary residue {value.imag:.3e}")
    return float(value.real)


def trace_norm(matrix: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(matrix), compute_uv=False)))


def trace_distance(a: DensityState, b: DensityState) -> float:
    """Half the trace norm of ``a - b``."""
    if a.signature != b.signature:
        raise SignatureError(f"{a.signature.dims} vs {b.signature.dims}")
    return 0.5 * trace_norm(a.matrix - b.matrix)
