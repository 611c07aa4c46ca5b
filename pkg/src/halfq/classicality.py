"""Error kets, spreads, tail bounds, and classicality certification.

A classical-sector description assigns each DOF a value and an error
margin.  A wave function is consistent with that description to order L
when every composed L-order error ket is small against the product of
margins; certified states then concentrate near the classical values in
every fundamental-observable representation, which is what makes the
half-quantum prediction bounds valid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .algebra import AlgebraError, HybridExpression, Symbol, partial_derivative
from .hilbert import (
    Grid,
    OperatorMatrix,
    SpectralDecomp,
    State,
    momentum_operator,
    position_operator,
    sector_embed,
)


@dataclass(frozen=True)
class ClassicalDatum:
    """Initial value and margin for one classical DOF."""

    q0: float
    p0: float
    delta_q: float
    delta_p: float

    def __post_init__(self):
        if self.delta_q <= 0 or self.delta_p <= 0:
            raise ValueError("error margins must be strictly positive")


@dataclass(frozen=True)
class ClassicalData:
    """Classical-sector initial data: one datum per DOF (index 1..M)."""

    data: tuple

    def __post_init__(self):
        object.__setattr__(self, "data", tuple(self.data))

    @property
    def dofs(self) -> int:
        return len(self.data)

    def center(self, sym: Symbol) -> float:
        d = self._datum(sym)
        return d.p0 if sym.is_momentum else d.q0

    def margin(self, sym: Symbol) -> float:
        d = self._datum(sym)
        return d.delta_p if sym.is_momentum else d.delta_q

    def _datum(self, sym: Symbol) -> ClassicalDatum:
        if not sym.is_classical or not 1 <= sym.index <= self.dofs:
            raise AlgebraError(f"no classical data for symbol {sym!r}")
        return self.data[sym.index - 1]

    def uncertainty_feasible(self, hbar: float) -> bool:
        """Margins respect the uncertainty floor delta_q*delta_p >= hbar/2."""
        return all(d.delta_q * d.delta_p >= hbar / 2 for d in self.data)

    def scaled(self, factor: float) -> "ClassicalData":
        return ClassicalData(
            tuple(
                ClassicalDatum(d.q0, d.p0, factor * d.delta_q, factor * d.delta_p)
                for d in self.data
            )
        )


@dataclass(frozen=True)
class SequenceSpec:
    """An ordered sequence of classical symbols with nonvanishing mixed partial."""

    symbols: tuple
    order: int = 1

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("sequence must be nonempty")
        if any(not s.is_classical for s in self.symbols):
            raise ValueError("sequence symbols must be classical")
        object.__setattr__(self, "symbols", tuple(self.symbols))

    @property
    def name(self) -> str:
        return ",".join(s.name for s in self.symbols)


# --------------------------------------------------------------------------
# error kets and their consequences


def error_ket(
    ops: Sequence[OperatorMatrix], centers: Sequence[float], psi: State
) -> State:
    """(X_1 - x_1)...(X_n - x_n)|psi>, applied right to left; unnormalized."""
    if len(ops) != len(centers):
        raise ValueError("ops and centers must have equal length")
    vec = psi.amplitudes
    for op, center in zip(reversed(ops), reversed(centers)):
        if op.dim != vec.size:
            raise ValueError("operator dimension does not match state")
        vec = op.matrix @ vec - center * vec
    return State(vec, psi.grids)


def error_ket_norm_sq(
    ops: Sequence[OperatorMatrix], centers: Sequence[float], psi: State
) -> float:
    return error_ket(ops, centers, psi).norm() ** 2


def spread_n(
    ops: Sequence[OperatorMatrix],
    centers: Sequence[float],
    psi: State,
    n: int | None = None,
    p: float = 0.99,
) -> float:
    """n-order spread (<E|E>/(1-p))^(1/2n).

    A single operator with ``n`` given is replicated into the n-order error
    ket; otherwise n defaults to the number of factors supplied.
    """
    if not 0 < p < 1:
        raise ValueError(f"probability must lie in (0,1), got {p}")
    ops = list(ops)
    centers = list(centers)
    if n is None:
        n = len(ops)
    elif len(ops) == 1 and n > 1:
        ops = ops * n
        centers = centers * n
    if len(ops) != n:
        raise ValueError("order n does not match the number of factors")
    ee = error_ket_norm_sq(ops, centers, psi)
    return (ee / (1.0 - p)) ** (1.0 / (2 * n))


def tail_probability(
    decomp: SpectralDecomp, psi: State, x0: float, dist: float, n: int
) -> tuple:
    """Measured probability outside [x0-dist, x0+dist] and its error-ket bound.

    The bound is <E^n|E^n>/dist^(2n); the measured tail never exceeds it.
    """
    if dist <= 0:
        raise ValueError("distance must be positive")
    amps2 = np.abs(decomp.amplitudes(psi)) ** 2
    dev = decomp.eigenvalues - x0
    outside = np.abs(dev) > dist
    measured = float(amps2[outside].sum())
    ee = float((dev ** (2 * n) * amps2).sum())
    return measured, ee / dist ** (2 * n)


# --------------------------------------------------------------------------
# sequence enumeration and certification


def classicality_sequences(
    solutions: Iterable[HybridExpression], classical_dofs: int
) -> list:
    """First-order sequences: multisets of classical symbols whose mixed
    partial of some time-evolved observable does not vanish.

    Total degree is capped at the classical polynomial degree of the
    solutions (higher mixed partials vanish identically).
    """
    solutions = list(solutions)
    symbols = [Symbol.q(i) for i in range(1, classical_dofs + 1)] + [
        Symbol.p(i) for i in range(1, classical_dofs + 1)
    ]
    symbols.sort()
    max_degree = max((sol.classical_degree() for sol in solutions), default=0)
    found = []

    def extend(prefix: tuple, start: int, exprs: list):
        for idx in range(start, len(symbols)):
            sym = symbols[idx]
            derived = [partial_derivative(e, sym) for e in exprs]
            derived = [e for e in derived if not e.is_zero]
            if not derived:
                continue
            seq = prefix + (sym,)
            found.append(SequenceSpec(seq))
            if len(seq) < max_degree:
                extend(seq, idx, derived)

    extend((), 0, solutions)
    found.sort(key=lambda s: (len(s.symbols), s.symbols))
    return found


def compose_sequences(sequences: Sequence[SequenceSpec], L: int) -> list:
    """All ordered L-fold compositions of first-order sequences."""
    if L < 1:
        raise ValueError("order L must be a positive integer")
    out = []
    for combo in product(sequences, repeat=L):
        symbols = tuple(s for spec in combo for s in spec.symbols)
        out.append(SequenceSpec(symbols, order=L))
    # distinct concatenations only, deterministic order
    unique = sorted({spec.symbols for spec in out})
    return [SequenceSpec(symbols, order=L) for symbols in unique]


@dataclass(frozen=True)
class CertificateRow:
    sequence: tuple  # symbol names
    lhs: float  # <E|E>
    rhs: float  # product of squared margins
    slack: float  # rhs - lhs


@dataclass(frozen=True)
class ClassicalityCertificate:
    """Order-L certification of a classical-sector wave function."""

    order: int
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(row.slack >= 0 for row in self.rows)

    def worst(self) -> CertificateRow:
        return self.rows[0]

    def to_json_dict(self) -> dict:
        return {
            "order": self.order,
            "verdict": "pass" if self.passed else "fail",
            "rows": [
                {
                    "sequence": list(row.sequence),
                    "lhs": row.lhs,
                    "rhs": row.rhs,
                    "slack": row.slack,
                }
                for row in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def classical_operators(grids: Sequence[Grid], hbar: float) -> dict:
    """q/p operators for every classical DOF, embedded on the sector grids."""
    ops = {}
    for i, grid in enumerate(grids, start=1):
        ops[Symbol.q(i)] = sector_embed(position_operator(grid), i, grids)
        ops[Symbol.p(i)] = sector_embed(momentum_operator(grid, hbar), i, grids)
    return ops


def certify(
    psi_c: State,
    data: ClassicalData,
    L: int,
    sequences: Sequence[SequenceSpec],
    hbar: float,
) -> ClassicalityCertificate:
    """Evaluate every composed L-order sequence inequality <E|E> <= prod(delta^2).

    Rows are sorted most binding first (ascending slack); the verdict is a
    property of the certificate, never an exception.
    """
    if L < 1:
        raise ValueError("order L must be a positive integer")
    if len(psi_c.grids) != data.dofs:
        raise ValueError("state grids do not match the classical data")
    ops = classical_operators(psi_c.grids, hbar)
    rows = []
    for spec in compose_sequences(sequences, L):
        chain_ops = [ops[s] for s in spec.symbols]
        centers = [data.center(s) for s in spec.symbols]
        lhs = error_ket_norm_sq(chain_ops, centers, psi_c)
        rhs = 1.0
        for s in spec.symbols:
            rhs *= data.margin(s) ** 2
        rows.append(
            CertificateRow(
                sequence=tuple(s.name for s in spec.symbols),
                lhs=lhs,
                rhs=rhs,
                slack=rhs - lhs,
            )
        )
    rows.sort(key=lambda r: (r.slack, r.sequence))
    return ClassicalityCertificate(order=L, rows=tuple(rows))


def schwarz_precheck(
    psi_c: State, data: ClassicalData, L: int, hbar: float
) -> dict:
    """Fast sufficient conditions <(z - z0)^2L> <= delta_z^2L per symbol.

    These are the Schwarz-reduced inequalities (hbar^2 terms dropped); a
    certificate verdict always comes from the full evaluation in
    :func:`certify`.
    """
    ops = classical_operators(psi_c.grids, hbar)
    out = {}
    for sym, op in ops.items():
        center = data.center(sym)
        lhs = error_ket_norm_sq([op] * L, [center] * L, psi_c)
        out[sym] = (lhs, data.margin(sym) ** (2 * L))
    return out


# --------------------------------------------------------------------------
# Gaussian families


def double_factorial_odd(L: int) -> int:
    """(2L-1)!! - the 2L-th central moment factor of a Gaussian."""
    out = 1
    for k in range(1, 2 * L, 2):
        out *= k
    return out


@dataclass(frozen=True)
class GaussianFeasibility:
    """Widths dq for which the minimum-uncertainty packet is L-order classical."""

    lower: float
    upper: float
    violated: str | None

    @property
    def feasible(self) -> bool:
        return self.violated is None and self.lower <= self.upper


def gaussian_feasibility(
    data: ClassicalData, L: int, hbar: float, dof: int = 1
) -> GaussianFeasibility:
    """Interval of packet widths satisfying the order-L moment bounds.

    Uses the quadrature-verified Gaussian moment law
    E[(q-q0)^2L] = (2L-1)!! dq^2L with momentum width hbar/(2 dq); feasible
    iff (2L-1)!!^(1/L) hbar/2 <= delta_q delta_p.
    """
    datum = data.data[dof - 1]
    c = double_factorial_odd(L) ** (1.0 / (2 * L))
    upper = datum.delta_q / c
    lower = c * hbar / (2.0 * datum.delta_p)
    if lower <= upper:
        return GaussianFeasibility(lower, upper, None)
    # empty: name the side that cannot be met even at the other side's edge
    violated = "momentum" if lower > datum.delta_q / c else "position"
    return GaussianFeasibility(lower, upper, violated)


def gaussian_moment(L: int, dq: float) -> float:
    """Verified 2L-th central moment of the packet density: (2L-1)!! dq^2L."""
    return double_factorial_odd(L) * dq ** (2 * L)
