"""Exact symbolic algebra for hybrid classical-quantum observables.

An expression is a finite sum of monomials

    c * i^s * hbar^h * (declared constants)^e * (classical symbols) * (quantum word)

where the coefficient c is an exact rational, the hbar grading h is a
nonnegative integer, classical symbols q_i/p_i commute with everything,
and the quantum word is an ordered product of Q_a/P_a operators kept in
normal order (within each degree of freedom all Q factors precede all P
factors).  Reordering a quantum word uses the canonical commutation
relation [Q_a, P_a] = i*hbar, which raises the hbar grading; symbols of
distinct degrees of freedom commute.

Floating point never enters here: all identities (round trips, bracket
antisymmetry, series solutions) hold exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from itertools import permutations, product
from typing import Mapping, Union
import warnings


class AlgebraError(ValueError):
    """Invalid algebraic operation (bad symbol, bad system, bad input)."""


class SystemMismatchError(AlgebraError):
    """Operands belong to different system declarations."""


class NonTerminatingSeriesError(RuntimeError):
    """Bracket iteration did not vanish within the allowed order.

    Carries the nonzero iterates collected so far in ``iterates``.
    """

    def __init__(self, message: str, iterates: list["HybridExpression"]):
        super().__init__(message)
        self.iterates = iterates


class UnquantizationWarning(UserWarning):
    """The hbar^0 grade of an unquantized operator does not dominate its
    hbar^2 residual; predictions built from it are unreliable."""


# --------------------------------------------------------------------------
# exact complex rationals


class CNum:
    """Complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re: Union[int, Fraction] = 0, im: Union[int, Fraction] = 0):
        object.__setattr__(self, "re", Fraction(re))
        object.__setattr__(self, "im", Fraction(im))

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("CNum is immutable")

    @staticmethod
    def of(value: "ScalarLike") -> "CNum":
        if isinstance(value, CNum):
            return value
        if isinstance(value, (int, Fraction)):
            return CNum(value)
        if isinstance(value, float):
            return CNum(Fraction(value))
        if isinstance(value, complex):
            return CNum(Fraction(value.real), Fraction(value.imag))
        raise TypeError(f"cannot build an exact scalar from {value!r}")

    def __add__(self, other: "CNum") -> "CNum":
        return CNum(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "CNum") -> "CNum":
        return CNum(self.re - other.re, self.im - other.im)

    def __neg__(self) -> "CNum":
        return CNum(-self.re, -self.im)

    def __mul__(self, other: "CNum") -> "CNum":
        return CNum(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    def inverse(self) -> "CNum":
        d = self.re * self.re + self.im * self.im
        if d == 0:
            raise ZeroDivisionError("division by zero scalar")
        return CNum(self.re / d, -self.im / d)

    def conjugate(self) -> "CNum":
        return CNum(self.re, -self.im)

    def __eq__(self, other) -> bool:
        return isinstance(other, CNum) and self.re == other.re and self.im == other.im

    def __hash__(self) -> int:
        return hash((self.re, self.im))

    def __bool__(self) -> bool:
        return self.re != 0 or self.im != 0

    def __abs__(self) -> float:
        return math.hypot(float(self.re), float(self.im))

    def to_complex(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __repr__(self) -> str:
        return f"CNum({self.re!r}, {self.im!r})"


ScalarLike = Union[int, Fraction, float, complex, CNum]

_ZERO = CNum(0)
_ONE = CNum(1)
_I = CNum(0, 1)
_MINUS_I = CNum(0, -1)


# --------------------------------------------------------------------------
# symbols and systems


class Kind(IntEnum):
    CLASSICAL_POS = 0
    CLASSICAL_MOM = 1
    QUANTUM_POS = 2
    QUANTUM_MOM = 3


_KIND_LETTER = {
    Kind.CLASSICAL_POS: "q",
    Kind.CLASSICAL_MOM: "p",
    Kind.QUANTUM_POS: "Q",
    Kind.QUANTUM_MOM: "P",
}


@dataclass(frozen=True, order=True)
class Symbol:
    """A canonical variable: classical q_i/p_i or quantum operator Q_a/P_a."""

    kind: Kind
    index: int

    def __post_init__(self):
        if self.index < 1:
            raise AlgebraError(f"symbol index must be positive, got {self.index}")

    @property
    def is_classical(self) -> bool:
        return self.kind in (Kind.CLASSICAL_POS, Kind.CLASSICAL_MOM)

    @property
    def is_momentum(self) -> bool:
        return self.kind in (Kind.CLASSICAL_MOM, Kind.QUANTUM_MOM)

    @property
    def name(self) -> str:
        return f"{_KIND_LETTER[self.kind]}{self.index}"

    # order used for canonical words: group by degree of freedom,
    # position factors before momentum factors
    @property
    def word_key(self) -> tuple:
        return (self.index, self.is_momentum)

    @staticmethod
    def q(i: int) -> "Symbol":
        return Symbol(Kind.CLASSICAL_POS, i)

    @staticmethod
    def p(i: int) -> "Symbol":
        return Symbol(Kind.CLASSICAL_MOM, i)

    @staticmethod
    def Q(a: int) -> "Symbol":
        return Symbol(Kind.QUANTUM_POS, a)

    @staticmethod
    def P(a: int) -> "Symbol":
        return Symbol(Kind.QUANTUM_MOM, a)

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class System:
    """Degree-of-freedom declaration: M classical and N quantum DOFs.

    Classical indices run 1..M, quantum indices 1..N (per-sector numbering).
    """

    classical: int
    quantum: int

    def __post_init__(self):
        if self.classical < 0 or self.quantum < 0:
            raise AlgebraError("DOF counts must be nonnegative")

    def contains(self, sym: Symbol) -> bool:
        limit = self.classical if sym.is_classical else self.quantum
        return 1 <= sym.index <= limit

    def check(self, sym: Symbol) -> Symbol:
        if not self.contains(sym):
            raise AlgebraError(
                f"symbol {sym.name} outside system "
                f"(classical 1..{self.classical}, quantum 1..{self.quantum})"
            )
        return sym

    # -- expression constructors -------------------------------------------

    def symbol(self, sym: Symbol) -> "HybridExpression":
        self.check(sym)
        if sym.is_classical:
            key = (0, (), ((sym, 1),), ())
        else:
            key = (0, (), (), (sym,))
        return HybridExpression(self, {key: _ONE})

    def q(self, i: int) -> "HybridExpression":
        return self.symbol(Symbol.q(i))

    def p(self, i: int) -> "HybridExpression":
        return self.symbol(Symbol.p(i))

    def Q(self, a: int) -> "HybridExpression":
        return self.symbol(Symbol.Q(a))

    def P(self, a: int) -> "HybridExpression":
        return self.symbol(Symbol.P(a))

    def scalar(self, value: ScalarLike) -> "HybridExpression":
        c = CNum.of(value)
        return HybridExpression(self, {(0, (), (), ()): c} if c else {})

    def zero(self) -> "HybridExpression":
        return HybridExpression(self, {})

    def one(self) -> "HybridExpression":
        return self.scalar(1)

    def hbar(self, power: int = 1) -> "HybridExpression":
        if power < 0:
            raise AlgebraError("hbar grading must stay nonnegative")
        return HybridExpression(self, {(power, (), (), ()): _ONE})

    def const(self, name: str, power: int = 1) -> "HybridExpression":
        if not name.isidentifier():
            raise AlgebraError(f"bad constant name {name!r}")
        pows = ((name, power),) if power else ()
        return HybridExpression(self, {(0, pows, (), ()): _ONE})


# --------------------------------------------------------------------------
# normal ordering of quantum words

# word -> {canonical word -> coefficient}; the hbar increment of each output
# word is (len(input) - len(output)) // 2 since every CCR application removes
# one Q and one P and raises the grading by one.
_NORMAL_CACHE: dict = {}


def _normal_words(word: tuple) -> dict:
    if len(word) < 2:
        return {word: _ONE}
    cached = _NORMAL_CACHE.get(word)
    if cached is not None:
        return cached
    result = None
    for i in range(len(word) - 1):
        a, b = word[i], word[i + 1]
        if a.word_key <= b.word_key:
            continue
        if a.index != b.index:
            # distinct DOFs commute
            result = _normal_words(word[:i] + (b, a) + word[i + 2 :])
        else:
            # same DOF, P before Q:  P Q = Q P - i hbar
            swapped = _normal_words(word[:i] + (b, a) + word[i + 2 :])
            dropped = _normal_words(word[:i] + word[i + 2 :])
            result = dict(swapped)
            for w, c in dropped.items():
                prev = result.get(w, _ZERO)
                total = prev + _MINUS_I * c
                if total:
                    result[w] = total
                elif w in result:
                    del result[w]
        break
    if result is None:
        result = {word: _ONE}
    _NORMAL_CACHE[word] = result
    return result


def _merge_pows(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    acc = dict(a)
    for key, exp in b:
        new = acc.get(key, 0) + exp
        if new:
            acc[key] = new
        else:
            del acc[key]
    return tuple(sorted(acc.items()))


# --------------------------------------------------------------------------
# expressions


class HybridExpression:
    """Canonical sum of hybrid monomials over a fixed :class:`System`.

    Immutable; all arithmetic returns new expressions.  Term keys are
    ``(hbar_power, constants, classical, quantum_word)`` and no two terms
    share a key, so structural equality is semantic equality.
    """

    __slots__ = ("system", "_terms")

    def __init__(self, system: System, terms: dict):
        object.__setattr__(self, "system", system)
        object.__setattr__(self, "_terms", terms)

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("HybridExpression is immutable")

    # -- basic queries ------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def terms(self) -> list:
        """Sorted ``(key, coeff)`` pairs; key = (hbar, consts, classical, word)."""
        return sorted(self._terms.items(), key=lambda kv: kv[0])

    def constants(self) -> set:
        return {name for key in self._terms for name, _ in key[1]}

    def classical_symbols(self) -> set:
        return {sym for key in self._terms for sym, _ in key[2]}

    def quantum_symbols(self) -> set:
        return {sym for key in self._terms for sym in key[3]}

    @property
    def has_quantum(self) -> bool:
        return any(key[3] for key in self._terms)

    def classical_degree(self) -> int:
        return max((sum(e for _, e in key[2]) for key in self._terms), default=0)

    def hbar_grades(self) -> set:
        return {key[0] for key in self._terms}

    def grade(self, hbar_power: int) -> "HybridExpression":
        """Sub-expression at a single hbar grading."""
        terms = {k: c for k, c in self._terms.items() if k[0] == hbar_power}
        return HybridExpression(self.system, terms)

    def coefficient_scale(self, hbar_power: int | None = None) -> float:
        """Largest coefficient magnitude, optionally within one grade."""
        vals = [
            abs(c)
            for k, c in self._terms.items()
            if hbar_power is None or k[0] == hbar_power
        ]
        return max(vals, default=0.0)

    # -- arithmetic ----------------------------------------------------------

    def _require_same(self, other: "HybridExpression"):
        if self.system != other.system:
            raise SystemMismatchError(
                f"systems differ: {self.system} vs {other.system}"
            )

    def _scaled(self, c: CNum) -> "HybridExpression":
        if not c:
            return HybridExpression(self.system, {})
        return HybridExpression(self.system, {k: v * c for k, v in self._terms.items()})

    def __add__(self, other) -> "HybridExpression":
        other = self._coerce(other)
        self._require_same(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            total = out.get(k, _ZERO) + c
            if total:
                out[k] = total
            elif k in out:
                del out[k]
        return HybridExpression(self.system, out)

    def __radd__(self, other) -> "HybridExpression":
        return self.__add__(other)

    def __sub__(self, other) -> "HybridExpression":
        other = self._coerce(other)
        return self.__add__(other._scaled(CNum(-1)))

    def __rsub__(self, other) -> "HybridExpression":
        return self._coerce(other).__sub__(self)

    def __neg__(self) -> "HybridExpression":
        return self._scaled(CNum(-1))

    def _coerce(self, other) -> "HybridExpression":
        if isinstance(other, HybridExpression):
            return other
        return self.system.scalar(other)

    def __mul__(self, other) -> "HybridExpression":
        if not isinstance(other, HybridExpression):
            return self._scaled(CNum.of(other))
        self._require_same(other)
        out: dict = {}
        for (h1, pr1, cl1, w1), c1 in self._terms.items():
            for (h2, pr2, cl2, w2), c2 in other._terms.items():
                base = c1 * c2
                consts = _merge_pows(pr1, pr2)
                classical = _merge_pows(cl1, cl2)
                joined = w1 + w2
                for word, cm in _normal_words(joined).items():
                    dh = (len(joined) - len(word)) // 2
                    key = (h1 + h2 + dh, consts, classical, word)
                    total = out.get(key, _ZERO) + base * cm
                    if total:
                        out[key] = total
                    elif key in out:
                        del out[key]
        return HybridExpression(self.system, out)

    def __rmul__(self, other) -> "HybridExpression":
        # scalars commute with everything; expression*expression handled above
        return self._scaled(CNum.of(other))

    def __truediv__(self, other) -> "HybridExpression":
        return self._scaled(CNum.of(other).inverse())

    def __pow__(self, n: int) -> "HybridExpression":
        if not isinstance(n, int) or n < 0:
            raise AlgebraError("expression powers must be nonnegative integers")
        out = self.system.one()
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, HybridExpression)
            and self.system == other.system
            and self._terms == other._terms
        )

    def __hash__(self) -> int:
        return hash((self.system, frozenset(self._terms.items())))

    def __str__(self) -> str:
        from . import grammar

        return grammar.format_expression(self)

    def __repr__(self) -> str:
        return f"<HybridExpression {self}>"

    # -- structure transforms -------------------------------------------------

    def map_coefficients(self, fn) -> "HybridExpression":
        out = {}
        for k, c in self._terms.items():
            new = fn(c)
            if new:
                out[k] = new
        return HybridExpression(self.system, out)

    def adjoint(self) -> "HybridExpression":
        """Hermitian conjugate: conjugate coefficients, reverse quantum words."""
        out: dict = {}
        for (h, pr, cl, word), c in self._terms.items():
            base = c.conjugate()
            rev = word[::-1]
            for new_word, cm in _normal_words(rev).items():
                dh = (len(rev) - len(new_word)) // 2
                key = (h + dh, pr, cl, new_word)
                total = out.get(key, _ZERO) + base * cm
                if total:
                    out[key] = total
                elif key in out:
                    del out[key]
        return HybridExpression(self.system, out)

    def substitute_constants(self, values: Mapping[str, ScalarLike]) -> "HybridExpression":
        """Replace declared constants by exact scalar values."""
        out: dict = {}
        for (h, pr, cl, word), c in self._terms.items():
            kept = []
            for name, exp in pr:
                if name in values:
                    v = CNum.of(values[name])
                    if exp < 0:
                        v = v.inverse()
                        exp = -exp
                    for _ in range(exp):
                        c = c * v
                else:
                    kept.append((name, exp))
            key = (h, tuple(kept), cl, word)
            total = out.get(key, _ZERO) + c
            if total:
                out[key] = total
            elif key in out:
                del out[key]
        return HybridExpression(self.system, out)


# --------------------------------------------------------------------------
# derivatives and brackets


def partial_derivative(expr: HybridExpression, sym: Symbol) -> HybridExpression:
    """Formal partial derivative with respect to a classical symbol."""
    if not sym.is_classical:
        raise AlgebraError(f"can only differentiate along classical symbols, got {sym.name}")
    expr.system.check(sym)
    out: dict = {}
    for (h, pr, cl, word), c in expr._terms.items():
        cl_dict = dict(cl)
        exp = cl_dict.get(sym)
        if not exp:
            continue
        if exp == 1:
            del cl_dict[sym]
        else:
            cl_dict[sym] = exp - 1
        key = (h, pr, tuple(sorted(cl_dict.items())), word)
        total = out.get(key, _ZERO) + c * CNum(exp)
        if total:
            out[key] = total
        elif key in out:
            del out[key]
    return HybridExpression(expr.system, out)


def commutator(a: HybridExpression, b: HybridExpression) -> HybridExpression:
    """[a, b] = ab - ba in canonical form."""
    a._require_same(b)
    return a * b - b * a


def poisson_bracket(a: HybridExpression, b: HybridExpression) -> HybridExpression:
    """Classical bracket over the classical symbols; quantum factors are
    multiplied in the order written."""
    a._require_same(b)
    out = a.system.zero()
    dofs = {s.index for s in a.classical_symbols() | b.classical_symbols()}
    for i in sorted(dofs):
        qi, pi = Symbol.q(i), Symbol.p(i)
        out = out + (
            partial_derivative(a, qi) * partial_derivative(b, pi)
            - partial_derivative(a, pi) * partial_derivative(b, qi)
        )
    return out


def double_bracket(a: HybridExpression, b: HybridExpression) -> HybridExpression:
    """Symmetrized classical bracket: quantum products taken both ways."""
    a._require_same(b)
    out = a.system.zero()
    dofs = {s.index for s in a.classical_symbols() | b.classical_symbols()}
    for i in sorted(dofs):
        qi, pi = Symbol.q(i), Symbol.p(i)
        aq, ap = partial_derivative(a, qi), partial_derivative(a, pi)
        bq, bp = partial_derivative(b, qi), partial_derivative(b, pi)
        out = out + (aq * bp - ap * bq + bp * aq - bq * ap)
    return out._scaled(CNum(Fraction(1, 2)))


def mul_ihbar(expr: HybridExpression) -> HybridExpression:
    """Multiply by i*hbar (raises the grading)."""
    out = {}
    for (h, pr, cl, word), c in expr._terms.items():
        out[(h + 1, pr, cl, word)] = c * _I
    return HybridExpression(expr.system, out)


def div_ihbar(expr: HybridExpression) -> HybridExpression:
    """Divide by i*hbar; every term must carry at least one power of hbar."""
    out = {}
    for (h, pr, cl, word), c in expr._terms.items():
        if h < 1:
            raise AlgebraError("expression is not divisible by hbar")
        out[(h - 1, pr, cl, word)] = c * _MINUS_I
    return HybridExpression(expr.system, out)


def hybrid_bracket(a: HybridExpression, b: HybridExpression) -> HybridExpression:
    """(a, b) = [a, b] + i*hbar*{{a, b}} - the generator of half-quantum dynamics."""
    return commutator(a, b) + mul_ihbar(double_bracket(a, b))


def jacobiator(
    a: HybridExpression, b: HybridExpression, c: HybridExpression
) -> HybridExpression:
    """(a,(b,c)) + (b,(c,a)) + (c,(a,b)); nonzero in general for the hybrid bracket."""
    return (
        hybrid_bracket(a, hybrid_bracket(b, c))
        + hybrid_bracket(b, hybrid_bracket(c, a))
        + hybrid_bracket(c, hybrid_bracket(a, b))
    )


# --------------------------------------------------------------------------
# quantization and unquantization

# pattern-level caches keyed by (q_power, p_power) of a single DOF
_WEYL_CACHE: dict = {}
_UNQ_CACHE: dict = {}


def _weyl_single(a: int, b: int) -> dict:
    """Fully symmetrized product of a Q's and b P's of one DOF, expanded in
    the normal-ordered basis.  Returns {(a', b'): coeff}; the hbar increment
    is (a + b - a' - b') // 2."""
    key = (a, b)
    cached = _WEYL_CACHE.get(key)
    if cached is not None:
        return cached
    Q, P = Symbol.Q(1), Symbol.P(1)
    pattern = (Q,) * a + (P,) * b
    orderings = set(permutations(pattern))
    weight = CNum(Fraction(1, len(orderings)))
    acc: dict = {}
    for word in orderings:
        for normal, c in _normal_words(word).items():
            counts = (
                sum(1 for s in normal if not s.is_momentum),
                sum(1 for s in normal if s.is_momentum),
            )
            total = acc.get(counts, _ZERO) + c * weight
            if total:
                acc[counts] = total
            elif counts in acc:
                del acc[counts]
    _WEYL_CACHE[key] = acc
    return acc


def _unquantize_single(a: int, b: int) -> dict:
    """Weyl symbol of the normal-ordered word Q^a P^b of one DOF.

    Returns {(q_power, p_power, hbar_increment): coeff} such that
    Q^a P^b = sum_terms coeff * hbar^inc * Weyl(q^qp * p^pp); replacing each
    Weyl-symmetrized block by the classical monomial realizes the
    unquantization map, and quantize-then-unquantize is the exact identity.
    """
    key = (a, b)
    cached = _UNQ_CACHE.get(key)
    if cached is not None:
        return cached
    result = {(a, b, 0): _ONE}
    # Weyl(q^a p^b) = Q^a P^b + lower-degree normal terms R;
    # invert triangularly: unq(Q^a P^b) = q^a p^b - unq(R).
    for (a2, b2), c in _weyl_single(a, b).items():
        if (a2, b2) == (a, b):
            continue
        dh = (a + b - a2 - b2) // 2
        for (qp, pp, dh2), c2 in _unquantize_single(a2, b2).items():
            k = (qp, pp, dh + dh2)
            total = result.get(k, _ZERO) - c * c2
            if total:
                result[k] = total
            elif k in result:
                del result[k]
    _UNQ_CACHE[key] = result
    return result


def _word_dof_powers(word: tuple) -> dict:
    """Q/P powers per DOF of a canonical word."""
    powers: dict = {}
    for sym in word:
        a, b = powers.get(sym.index, (0, 0))
        if sym.is_momentum:
            powers[sym.index] = (a, b + 1)
        else:
            powers[sym.index] = (a + 1, b)
    return powers


def weyl_quantize(expr: HybridExpression) -> HybridExpression:
    """Dirac/Weyl quantization of a fully classical expression.

    Classical DOF i becomes quantum DOF i; each monomial q^n p^m maps to the
    fully symmetrized operator product, expressed in normal order with
    explicit hbar corrections.
    """
    if expr.has_quantum:
        raise AlgebraError("weyl_quantize input must contain no quantum symbols")
    if expr.system.quantum != 0:
        raise AlgebraError(
            "weyl_quantize expects a purely classical system declaration"
        )
    target = System(0, expr.system.classical)
    out: dict = {}
    for (h, pr, cl, _word), c in expr._terms.items():
        per_dof: dict = {}
        for sym, exp in cl:
            a, b = per_dof.get(sym.index, (0, 0))
            if sym.is_momentum:
                per_dof[sym.index] = (a, b + exp)
            else:
                per_dof[sym.index] = (a + exp, b)
        dofs = sorted(per_dof)
        expanded = [list(_weyl_single(*per_dof[d]).items()) for d in dofs]
        for combo in product(*expanded):
            word: list = []
            coeff = c
            dh = 0
            for d, ((a2, b2), cw) in zip(dofs, combo):
                a, b = per_dof[d]
                dh += (a + b - a2 - b2) // 2
                word.extend([Symbol.Q(d)] * a2 + [Symbol.P(d)] * b2)
                coeff = coeff * cw
            key = (h + dh, pr, (), tuple(word))
            total = out.get(key, _ZERO) + coeff
            if total:
                out[key] = total
            elif key in out:
                del out[key]
    return HybridExpression(target, out)


def unquantize(
    expr: HybridExpression,
    classical_count: int,
    magnitude_guard: float | None = 1000.0,
) -> HybridExpression:
    """Unquantization: quantum DOFs 1..classical_count become classical
    variables via the Weyl-symbol basis; the remaining DOFs pass through
    (renumbered to 1..N-classical_count).

    With ``magnitude_guard`` set, warns when the hbar^0 grade of the result
    does not dominate the hbar^2-and-higher residual by that factor: such a
    result cannot reproduce full-quantum predictions reliably.
    """
    if expr.system.classical != 0:
        raise AlgebraError("unquantize input must be fully operator-valued")
    n = expr.system.quantum
    if classical_count < 1:
        raise AlgebraError("unquantize requires at least one classical-sector DOF")
    if classical_count > n:
        raise AlgebraError(f"classical_count {classical_count} exceeds {n} DOFs")
    target = System(classical_count, n - classical_count)
    out: dict = {}
    for (h, pr, cl, word), c in expr._terms.items():
        assert not cl
        powers = _word_dof_powers(word)
        class_dofs = sorted(d for d in powers if d <= classical_count)
        passthrough = tuple(
            Symbol(s.kind, s.index - classical_count)
            for s in word
            if s.index > classical_count
        )
        expanded = [list(_unquantize_single(*powers[d]).items()) for d in class_dofs]
        for combo in product(*expanded):
            coeff = c
            dh = 0
            cl_pows: dict = {}
            for d, ((qp, pp, dhi), cu) in zip(class_dofs, combo):
                coeff = coeff * cu
                dh += dhi
                if qp:
                    cl_pows[Symbol.q(d)] = qp
                if pp:
                    cl_pows[Symbol.p(d)] = pp
            key = (h + dh, pr, tuple(sorted(cl_pows.items())), passthrough)
            total = out.get(key, _ZERO) + coeff
            if total:
                out[key] = total
            elif key in out:
                del out[key]
    result = HybridExpression(target, out)
    if magnitude_guard is not None:
        leading = result.coefficient_scale(0)
        residual = max(
            (abs(c) for k, c in result._terms.items() if k[0] >= 2), default=0.0
        )
        if residual > 0 and leading < magnitude_guard * residual:
            warnings.warn(
                "unquantization unreliable: hbar^0 magnitude "
                f"{leading:.3g} does not dominate hbar^2 residual {residual:.3g}",
                UnquantizationWarning,
                stacklevel=2,
            )
    return result


def half_quantize(expr: HybridExpression, split: tuple) -> HybridExpression:
    """Half quantization: quantize everything, then unquantize the first
    ``split[0]`` DOFs back to classical variables.

    The input is a classical polynomial over M+N DOFs; DOFs 1..M stay
    classical, DOFs M+1..M+N become quantum operators 1..N.
    """
    m, n = split
    if m < 0 or n < 0 or m + n != expr.system.classical or expr.system.quantum != 0:
        raise AlgebraError(
            f"split {split} does not partition the {expr.system.classical} classical DOFs"
        )
    if n == 0:
        raise AlgebraError("half quantization needs at least one quantum DOF")
    if m == 0:
        raise AlgebraError("half quantization needs at least one classical DOF")
    # the magnitude guard targets unquantization of externally supplied
    # operators (unresolved-commutator orders); a freshly quantized classical
    # polynomial cannot be in a pathological order
    return unquantize(weyl_quantize(expr), m, magnitude_guard=None)


# --------------------------------------------------------------------------
# Heisenberg-picture series


def heisenberg_series(
    observable: HybridExpression,
    hamiltonian: HybridExpression,
    time: Union[str, int, float, Fraction] = "t",
    bracket: str = "hybrid",
    max_order: int | None = None,
) -> HybridExpression:
    """Series solution sum_n (1/n!) (t / i hbar)^n [..[O, H]..].

    The nested-bracket chain must terminate (some iterate vanishes) unless a
    truncation ``max_order`` is supplied.  ``time`` is either the name of a
    symbolic constant (kept exact in the result) or a numeric value.
    ``bracket`` selects the full-quantum commutator or the hybrid bracket.
    """
    observable._require_same(hamiltonian)
    if bracket == "hybrid":
        step = hybrid_bracket
    elif bracket == "commutator":
        step = commutator
    else:
        raise AlgebraError(f"unknown bracket {bracket!r}")
    symbolic = isinstance(time, str)
    if symbolic and not time.isidentifier():
        raise AlgebraError(f"bad time constant name {time!r}")
    truncate = max_order if max_order is not None else 60
    result = observable
    current = observable
    iterates = []
    factorial = Fraction(1)
    for n in range(1, truncate + 1):
        current = div_ihbar(step(current, hamiltonian))
        if current.is_zero:
            return result
        iterates.append(current)
        factorial *= n
        if symbolic:
            scaled = HybridExpression(
                current.system,
                {
                    (h, _merge_pows(pr, ((time, n),)), cl, w): c * CNum(1 / factorial)
                    for (h, pr, cl, w), c in current._terms.items()
                },
            )
        else:
            factor = CNum(Fraction(time) ** n / factorial)
            scaled = current._scaled(factor)
        result = result + scaled
    if max_order is not None:
        return result
    raise NonTerminatingSeriesError(
        f"bracket chain did not terminate within {truncate} orders; "
        "pass max_order to truncate",
        iterates[:6],
    )


# --------------------------------------------------------------------------
# Jacobi-identity failure


def hybrid_monomials(system: System, max_degree: int) -> list:
    """Canonical monomials q^a p^b Q^c P^d with 1 <= a+b+c+d <= max_degree,
    ordered by total degree then exponent tuple (single-DOF systems)."""
    if system != System(1, 1):
        raise AlgebraError("monomial enumeration implemented for the 1+1 DOF system")
    q, p, Q, P = system.q(1), system.p(1), system.Q(1), system.P(1)
    out = []
    for total in range(1, max_degree + 1):
        for a in range(total + 1):
            for b in range(total - a + 1):
                for c in range(total - a - b + 1):
                    d = total - a - b - c
                    out.append(q**a * p**b * Q**c * P**d)
    return out


def find_jacobiator_witness(max_degree: int = 3):
    """First monomial triple (by total degree, then enumeration order) with
    nonzero jacobiator; exhaustive over q1/p1/Q1/P1 monomials.

    Returns (A, B, C, jacobiator) or None.  Pure-classical and pure-quantum
    triples satisfy the Jacobi identity, so any witness mixes the sectors.
    """
    system = System(1, 1)
    monos = hybrid_monomials(system, max_degree)

    def degree(expr):
        key = expr.terms()[0][0]
        return sum(e for _, e in key[2]) + len(key[3])

    degrees = [degree(m) for m in monos]
    pair_cache: dict = {}

    def pair(i, j):
        got = pair_cache.get((i, j))
        if got is None:
            got = hybrid_bracket(monos[i], monos[j])
            pair_cache[(i, j)] = got
        return got

    indices = range(len(monos))
    for total in range(3, 3 * max_degree + 1):
        for ia in indices:
            if degrees[ia] > total - 2:
                continue
            for ib in indices:
                rest = total - degrees[ia] - degrees[ib]
                if rest < 1:
                    continue
                for ic in indices:
                    if degrees[ic] != rest:
                        continue
                    bc, ca, ab = pair(ib, ic), pair(ic, ia), pair(ia, ib)
                    if bc.is_zero and ca.is_zero and ab.is_zero:
                        continue
                    j = (
                        hybrid_bracket(monos[ia], bc)
                        + hybrid_bracket(monos[ib], ca)
                        + hybrid_bracket(monos[ic], ab)
                    )
                    if not j.is_zero:
                        return monos[ia], monos[ib], monos[ic], j
    return None
