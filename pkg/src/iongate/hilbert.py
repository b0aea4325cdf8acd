"""Operators and states on the composite space qubit (x) qubit (x) motional mode(s).

Basis conventions used throughout the package:

* qubit index 0 is the upper state (up-arrow), index 1 the lower state
  (down-arrow),
* composite ordering is qubit 1 (x) qubit 2 (x) mode(s), modes in the order
  they are listed (in-phase before out-of-phase),
* everything is dense complex128; the largest space we ever build is
  2*2*15*15 = 900 dimensional.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ID2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_P = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |0><1|, raises lower -> upper
SIGMA_M = SIGMA_P.conj().T

KET_UP = np.array([1.0, 0.0], dtype=complex)
KET_DOWN = np.array([0.0, 1.0], dtype=complex)


@dataclass(frozen=True)
class FockSpace:
    """Truncated harmonic-oscillator space with `dim` number states."""

    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"Fock space needs dim >= 2, got {self.dim}")


def ladder_operators(space: FockSpace | int) -> tuple[np.ndarray, np.ndarray]:
    """Lowering and raising operators on a truncated Fock space.

    lowering[n-1, n] = sqrt(n); raising is the exact conjugate transpose.
    """
    dim = space.dim if isinstance(space, FockSpace) else int(space)
    if dim < 2:
        raise ValueError(f"ladder operators need dim >= 2, got {dim}")
    lowering = np.zeros((dim, dim), dtype=complex)
    n = np.arange(1, dim)
    lowering[n - 1, n] = np.sqrt(n)
    return lowering, lowering.conj().T


def pauli_phi(phi: float) -> np.ndarray:
    """Rotated Pauli operator cos(phi) sigma_x + sin(phi) sigma_y."""
    return np.cos(phi) * SIGMA_X + np.sin(phi) * SIGMA_Y


def tensor(*factors: np.ndarray) -> np.ndarray:
    """Kronecker product of the factors in the given order."""
    if not factors:
        raise ValueError("tensor needs at least one factor")
    out = np.asarray(factors[0], dtype=complex)
    for f in factors[1:]:
        out = np.kron(out, np.asarray(f, dtype=complex))
    return out


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def ket(qubit1: int, qubit2: int, *mode_ns: int, fock_dim: int = 0) -> np.ndarray:
    """Product basis ket |q1 q2 n1 n2 ...> with q = 0 (upper) or 1 (lower)."""
    vecs = [np.eye(2, dtype=complex)[q] for q in (qubit1, qubit2)]
    for n in mode_ns:
        v = np.zeros(fock_dim, dtype=complex)
        v[n] = 1.0
        vecs.append(v)
    out = vecs[0]
    for v in vecs[1:]:
        out = np.kron(out, v)
    return out


def qubit_operator(op: np.ndarray, which: int, mode_dims: tuple[int, ...] = ()) -> np.ndarray:
    """Lift a 2x2 operator onto qubit `which` (0 or 1) of the composite space."""
    factors = [ID2, ID2] + [np.eye(d, dtype=complex) for d in mode_dims]
    factors[which] = op
    return tensor(*factors)


def mode_operator(op: np.ndarray, which: int, mode_dims: tuple[int, ...]) -> np.ndarray:
    """Lift a mode operator onto mode `which` of qubit (x) qubit (x) modes."""
    factors: list[np.ndarray] = [ID2, ID2] + [np.eye(d, dtype=complex) for d in mode_dims]
    factors[2 + which] = op
    return tensor(*factors)


def thermal_state(dim: int, nbar: float) -> np.ndarray:
    """Thermal oscillator density matrix with mean occupation nbar, renormalised
    on the truncated space."""
    if nbar <= 0:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    n = np.arange(dim)
    p = (nbar / (1.0 + nbar)) ** n / (1.0 + nbar)
    p /= p.sum()
    return np.diag(p).astype(complex)


def projector(vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, dtype=complex)
    return np.outer(v, v.conj())


@dataclass
class DensityMatrix:
    """Density matrix on a composite space with subsystem dimensions `dims`."""

    matrix: np.ndarray
    dims: tuple[int, ...]
    _tol: float = field(default=1e-8, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        self.dims = tuple(int(d) for d in self.dims)
        d = int(np.prod(self.dims))
        if self.matrix.shape != (d, d):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match dims {self.dims}"
            )

    def validate(self, trace_tol: float = 1e-10, eig_tol: float = 1e-9) -> "DensityMatrix":
        """Check Hermiticity, unit trace and positivity; raise on violation."""
        herm = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if herm > self._tol:
            raise ValueError(f"density matrix not Hermitian (deviation {herm:.2e})")
        tr = self.matrix.trace()
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {tr} differs from 1")
        evals = np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))
        if evals.min() < -eig_tol:
            raise ValueError(f"density matrix has negative eigenvalue {evals.min():.2e}")
        return self

    def ptrace(self, keep: tuple[int, ...] | list[int]) -> "DensityMatrix":
        mat, dims = partial_trace(self.matrix, self.dims, keep)
        return DensityMatrix(mat, dims)

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))


def partial_trace(
    rho: np.ndarray, dims: tuple[int, ...] | list[int], keep: tuple[int, ...] | list[int]
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Trace out every subsystem not listed in `keep` (indices into `dims`).

    Returns the reduced matrix and its subsystem dimensions, preserving the
    relative order of the kept subsystems.
    """
    dims = tuple(int(d) for d in dims)
    keep = tuple(sorted(int(k) for k in keep))
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise ValueError(f"keep indices {keep} invalid for {n} subsystems")
    if len(set(keep)) != len(keep):
        raise ValueError("duplicate keep indices")
    rho = np.asarray(rho, dtype=complex).reshape(dims + dims)
    # contract each traced subsystem's bra/ket index pair
    traced = [i for i in range(n) if i not in keep]
    for count, i in enumerate(traced):
        # axis bookkeeping: after `count` contractions the remaining tensor has
        # (n - count) ket axes followed by (n - count) bra axes
        offset = sum(1 for j in traced[:count] if j < i)
        ax = i - offset
        rho = np.trace(rho, axis1=ax, axis2=ax + (n - count))
    kept_dims = tuple(dims[k] for k in keep)
    d = int(np.prod(kept_dims))
    return rho.reshape(d, d), kept_dims
