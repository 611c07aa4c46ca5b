"""Finite-dimensional quantum mechanics on uniform position grids.

Each degree of freedom lives on a periodic grid; the momentum operator is
the spectral (discrete Fourier) derivative, so smooth wave packets that
stay away from the grid edges see continuum behaviour.  Multi-DOF objects
are Kronecker compositions with the grids listed in DOF order.

These matrices realize the quantum words of :mod:`halfq.algebra`
numerically; they also power the brute-force full-quantum oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence, Union

import numpy as np

from .algebra import AlgebraError, HybridExpression, Symbol

HERMITIAN_RTOL = 1e-10


class GridError(ValueError):
    """Grid/state construction failure (packet too wide, bad bounds...)."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid of npoints sites on [xmin, xmax)."""

    npoints: int
    xmin: float
    xmax: float

    def __post_init__(self):
        if self.npoints < 8:
            raise GridError(f"need at least 8 grid points, got {self.npoints}")
        if not self.xmax > self.xmin:
            raise GridError(f"empty grid range [{self.xmin}, {self.xmax}]")

    @property
    def spacing(self) -> float:
        return (self.xmax - self.xmin) / self.npoints

    def points(self) -> np.ndarray:
        return self.xmin + self.spacing * np.arange(self.npoints)


def _total_dim(grids: Sequence[Grid]) -> int:
    dim = 1
    for g in grids:
        dim *= g.npoints
    return dim


@dataclass(frozen=True, eq=False)
class State:
    """Complex amplitudes over the tensor-product grid.

    Physical states are unit norm; error kets and other intermediate
    vectors may carry any norm.  Amplitudes are frozen after construction.
    """

    amplitudes: np.ndarray
    grids: tuple

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size != _total_dim(self.grids):
            raise GridError(
                f"amplitude length {amps.size} does not match grids "
                f"(expect {_total_dim(self.grids)})"
            )
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "grids", tuple(self.grids))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "State":
        n = self.norm()
        if n == 0:
            raise GridError("cannot normalize the zero vector")
        return State(self.amplitudes / n, self.grids)

    def overlap(self, other: "State") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def boundary_mass(self) -> float:
        """Probability weight sitting on the outermost cell of any axis."""
        shape = tuple(g.npoints for g in self.grids)
        dens = np.abs(self.amplitudes.reshape(shape)) ** 2
        total = 0.0
        for axis in range(len(shape)):
            sl_lo = [slice(None)] * len(shape)
            sl_hi = [slice(None)] * len(shape)
            sl_lo[axis] = 0
            sl_hi[axis] = shape[axis] - 1
            total += float(dens[tuple(sl_lo)].sum() + dens[tuple(sl_hi)].sum())
        return total


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense operator on the tensor-product grid."""

    matrix: np.ndarray
    grids: tuple
    hermitian: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = _total_dim(self.grids)
        if mat.shape != (dim, dim):
            raise GridError(f"matrix shape {mat.shape} does not match grids (dim {dim})")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "grids", tuple(self.grids))
        if self.hermitian is None:
            scale = float(np.max(np.abs(mat))) or 1.0
            herm = float(np.max(np.abs(mat - mat.conj().T))) <= HERMITIAN_RTOL * scale
            object.__setattr__(self, "hermitian", herm)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, psi: State) -> State:
        return State(self.matrix @ psi.amplitudes, psi.grids)

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix.conj().T, self.grids)

    def expectation(self, psi: State) -> complex:
        return complex(np.vdot(psi.amplitudes, self.matrix @ psi.amplitudes))


@dataclass(frozen=True, eq=False)
class SpectralDecomp:
    """Eigenvalues ascending, eigenvectors column-orthonormal."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=float)
        v = np.asarray(self.eigenvectors, dtype=complex)
        w.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "eigenvectors", v)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def amplitudes(self, psi: State) -> np.ndarray:
        """Projections <a_i|psi> in the eigenbasis."""
        return self.eigenvectors.conj().T @ psi.amplitudes

    def spectral_range(self) -> float:
        return float(self.eigenvalues[-1] - self.eigenvalues[0])


# --------------------------------------------------------------------------
# operators and states on a single grid


def position_operator(grid: Grid) -> OperatorMatrix:
    return OperatorMatrix(np.diag(grid.points().astype(complex)), (grid,), hermitian=True)


@lru_cache(maxsize=32)
def _momentum_matrix(grid: Grid, hbar: float) -> np.ndarray:
    n = grid.npoints
    k = 2.0 * math.pi * np.fft.fftfreq(n, d=grid.spacing)
    # unitary DFT: momentum = F^dagger diag(hbar k) F, exactly Hermitian
    f = np.fft.fft(np.eye(n), axis=0) / math.sqrt(n)
    mat = f.conj().T @ (hbar * k[:, None] * f)
    mat = 0.5 * (mat + mat.conj().T)
    mat.flags.writeable = False
    return mat


def momentum_operator(grid: Grid, hbar: float) -> OperatorMatrix:
    """Spectral-derivative momentum; periodic convention.

    [q, p] = i*hbar*I holds on states negligible at the grid edges (the
    commutator picks up aliasing corrections in the outermost cells).
    """
    return OperatorMatrix(_momentum_matrix(grid, float(hbar)), (grid,), hermitian=True)


def identity_operator(grids: Sequence[Grid]) -> OperatorMatrix:
    return OperatorMatrix(np.eye(_total_dim(grids), dtype=complex), tuple(grids), hermitian=True)


def gaussian_state(grid: Grid, q0: float, p0: float, dq: float, hbar: float) -> State:
    """Normalized packet exp(-(q-q0)^2/4dq^2 + i p0 q/hbar) on the grid."""
    if dq <= 0:
        raise GridError("packet width must be positive")
    if q0 - 6 * dq < grid.xmin or q0 + 6 * dq > grid.xmax:
        raise GridError(
            f"packet [{q0 - 6 * dq:.3g}, {q0 + 6 * dq:.3g}] does not fit grid "
            f"[{grid.xmin:.3g}, {grid.xmax:.3g}]"
        )
    x = grid.points()
    amps = np.exp(-((x - q0) ** 2) / (4.0 * dq * dq) + 1j * p0 * x / hbar)
    amps /= np.linalg.norm(amps)
    return State(amps, (grid,))


def tensor(a, b):
    """Kronecker composition of states or operators; grids concatenate."""
    if isinstance(a, State) and isinstance(b, State):
        return State(np.kron(a.amplitudes, b.amplitudes), a.grids + b.grids)
    if isinstance(a, OperatorMatrix) and isinstance(b, OperatorMatrix):
        return OperatorMatrix(
            np.kron(a.matrix, b.matrix),
            a.grids + b.grids,
            hermitian=(a.hermitian and b.hermitian) or None,
        )
    raise TypeError("tensor arguments must be two States or two OperatorMatrix")


def sector_embed(op: OperatorMatrix, dof: int, grids: Sequence[Grid]) -> OperatorMatrix:
    """Operator acting on one DOF of a tensor space (identity elsewhere)."""
    mats = []
    for idx, g in enumerate(grids):
        if idx == dof - 1:
            if op.grids != (g,):
                raise GridError(f"operator grid does not match DOF {dof}")
            mats.append(op.matrix)
        else:
            mats.append(np.eye(g.npoints, dtype=complex))
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return OperatorMatrix(out, tuple(grids), hermitian=op.hermitian or None)


# --------------------------------------------------------------------------
# symbolic -> numeric


def evaluate_symbolic(
    expr: HybridExpression,
    classical_values: Mapping[Union[Symbol, str], float],
    quantum_grids: Mapping[int, Grid],
    hbar: float,
    constants: Mapping[str, float] | None = None,
) -> OperatorMatrix:
    """Realize a hybrid expression as a dense matrix on the quantum grids.

    Every classical symbol must be bound in ``classical_values`` (keys may
    be Symbols or names like ``"q1"``), every declared constant in
    ``constants``, and every quantum DOF 1..N must have a grid.
    """
    system = expr.system
    values: dict = {}
    for key, val in classical_values.items():
        sym = key if isinstance(key, Symbol) else _symbol_from_name(str(key))
        values[sym] = float(val)
    constants = dict(constants or {})
    grids = tuple(quantum_grids[a] for a in range(1, system.quantum + 1))
    if not grids:
        raise AlgebraError("evaluate_symbolic needs at least one quantum DOF")
    dim = _total_dim(grids)
    small_q = [position_operator(g).matrix for g in grids]
    small_p = [_momentum_matrix(g, float(hbar)) for g in grids]
    total = np.zeros((dim, dim), dtype=complex)
    for (h, consts, classical, word), coeff in expr.terms():
        scalar = coeff.to_complex() * float(hbar) ** h
        for name, e in consts:
            if name not in constants:
                raise AlgebraError(f"unbound constant {name!r}")
            scalar *= float(constants[name]) ** e
        for sym, e in classical:
            if sym not in values:
                raise AlgebraError(f"unbound classical symbol {sym.name}")
            scalar *= values[sym] ** e
        # canonical words group factors per DOF: multiply small matrices
        # within each DOF, then Kronecker across DOFs
        factor = None
        per_dof: dict = {}
        for sym in word:
            small = small_p[sym.index - 1] if sym.is_momentum else small_q[sym.index - 1]
            cur = per_dof.get(sym.index)
            per_dof[sym.index] = small if cur is None else cur @ small
        for a in range(1, system.quantum + 1):
            block = per_dof.get(a)
            if block is None:
                block = np.eye(grids[a - 1].npoints, dtype=complex)
            factor = block if factor is None else np.kron(factor, block)
        total += scalar * factor
    return OperatorMatrix(total, grids)


def _symbol_from_name(name: str) -> Symbol:
    import re

    match = re.match(r"^([qpQP])([0-9]+)$", name)
    if match is None:
        raise AlgebraError(f"not a symbol name: {name!r}")
    return {"q": Symbol.q, "p": Symbol.p, "Q": Symbol.Q, "P": Symbol.P}[
        match.group(1)
    ](int(match.group(2)))


# --------------------------------------------------------------------------
# spectra, probabilities, evolution


def spectral_decompose(op: OperatorMatrix) -> SpectralDecomp:
    if not op.hermitian:
        raise AlgebraError("spectral decomposition requires a Hermitian operator")
    w, v = np.linalg.eigh(op.matrix)
    return SpectralDecomp(w, v)


ENDPOINT_RTOL = 1e-9


def interval_mask(eigenvalues: np.ndarray, interval: tuple) -> np.ndarray:
    """Closed-interval membership with endpoint blur absorbed.

    Eigenvalues within ENDPOINT_RTOL * spectral range of an endpoint count
    as inside (closed-interval convention for near-degenerate values).
    """
    lo, hi = interval
    if hi < lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    span = float(eigenvalues[-1] - eigenvalues[0]) if eigenvalues.size > 1 else 1.0
    tol = ENDPOINT_RTOL * max(span, 1.0)
    return (eigenvalues >= lo - tol) & (eigenvalues <= hi + tol)


def interval_probability(decomp: SpectralDecomp, psi: State, interval: tuple) -> float:
    """Probability that a measurement lands in the closed interval."""
    amps = decomp.amplitudes(psi)
    mask = interval_mask(decomp.eigenvalues, interval)
    return float(np.sum(np.abs(amps[mask]) ** 2))


def evolve_with(decomp: SpectralDecomp, psi0: State, t: float, hbar: float) -> State:
    """exp(-iHt/hbar) psi0 given the Hamiltonian decomposition."""
    coeffs = decomp.amplitudes(psi0)
    phases = np.exp(-1j * decomp.eigenvalues * t / hbar)
    return State(decomp.eigenvectors @ (phases * coeffs), psi0.grids)


def evolve_full_quantum(
    H: OperatorMatrix, psi0: State, t: float, hbar: float = 1.0
) -> State:
    """Unitary evolution by spectral decomposition; exactly norm-preserving."""
    if not H.hermitian:
        raise AlgebraError("Hamiltonian must be Hermitian")
    psi = evolve_with(spectral_decompose(H), psi0, t, hbar)
    if abs(psi.norm() - psi0.norm()) > 1e-9:
        raise GridError("evolution lost unitarity beyond 1e-9")
    return psi
