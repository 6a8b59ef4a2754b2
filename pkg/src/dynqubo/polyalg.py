"""Sparse multivariate polynomial arithmetic with float coefficients.

Polynomials are the common currency of the whole pipeline: reactor dynamics,
stage costs, the state-eliminated objective, and the binarized pseudo-Boolean
form are all instances of the same canonical representation.

Variables carry a namespace (state / input / binary / auxiliary), a time
stage, and a component slot.  Binary and auxiliary variables are 0/1 valued,
so canonicalization collapses their powers (b^k = b); polynomials over them
are therefore always multilinear.
"""

from __future__ import annotations

import enum
import re
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import SelfReferenceError, UnboundVariableError

# Relative magnitude below which a coefficient is considered floating-point
# dust from cancellation and dropped during canonicalization.
COEFF_DROP_RTOL = 1e-15


class Namespace(enum.IntEnum):
    """Variable kinds, ordered; the order makes VarId totally ordered."""

    STATE = 0
    INPUT = 1
    BINARY = 2
    AUXILIARY = 3


_NS_LETTER = {
    Namespace.STATE: "x",
    Namespace.INPUT: "u",
    Namespace.BINARY: "b",
    Namespace.AUXILIARY: "a",
}
_LETTER_NS = {v: k for k, v in _NS_LETTER.items()}


class VarId(NamedTuple):
    """A variable identity: (namespace, stage, slot), totally ordered."""

    namespace: Namespace
    stage: int
    slot: int

    def __str__(self) -> str:
        return f"{_NS_LETTER[self.namespace]}{self.stage}_{self.slot}"

    def shifted(self, delta: int) -> "VarId":
        return VarId(self.namespace, self.stage + delta, self.slot)


def state_var(stage: int, slot: int = 0) -> VarId:
    return VarId(Namespace.STATE, stage, slot)


def input_var(stage: int, slot: int = 0) -> VarId:
    return VarId(Namespace.INPUT, stage, slot)


def binary_var(stage: int, slot: int = 0) -> VarId:
    return VarId(Namespace.BINARY, stage, slot)


def aux_var(slot: int) -> VarId:
    return VarId(Namespace.AUXILIARY, 0, slot)


_VARID_RE = re.compile(r"([xuba])(\d+)_(\d+)(?:\^(\d+))?$")


def parse_varid(text: str) -> tuple[VarId, int]:
    """Parse one `letter<stage>_<slot>[^exp]` token; returns (var, exponent)."""
    m = _VARID_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse variable token {text!r}")
    ns = _LETTER_NS[m.group(1)]
    exp = int(m.group(4)) if m.group(4) else 1
    return VarId(ns, int(m.group(2)), int(m.group(3))), exp


def _is_binary_valued(var: VarId) -> bool:
    return var.namespace in (Namespace.BINARY, Namespace.AUXILIARY)


class Monomial:
    """A product of variable powers, stored as a sorted tuple of (var, exp).

    Canonical form: no zero exponents, and exponents of binary/auxiliary
    variables collapsed to 1.  The empty monomial is the multiplicative unit.
    """

    __slots__ = ("_pairs",)

    def __init__(self, exponents: Mapping[VarId, int] | Iterable[tuple[VarId, int]] = ()):
        items = exponents.items() if isinstance(exponents, Mapping) else exponents
        merged: dict[VarId, int] = {}
        for var, exp in items:
            if exp < 0:
                raise ValueError(f"negative exponent for {var}")
            if exp == 0:
                continue
            merged[var] = merged.get(var, 0) + exp
        for var in merged:
            if _is_binary_valued(var):
                merged[var] = 1
        self._pairs = tuple(sorted(merged.items()))

    @property
    def exponents(self) -> dict[VarId, int]:
        return dict(self._pairs)

    @property
    def pairs(self) -> tuple[tuple[VarId, int], ...]:
        return self._pairs

    def degree(self) -> int:
        return sum(e for _, e in self._pairs)

    def variables(self) -> tuple[VarId, ...]:
        return tuple(v for v, _ in self._pairs)

    def is_unit(self) -> bool:
        return not self._pairs

    def mul(self, other: "Monomial") -> "Monomial":
        if not self._pairs:
            return other
        if not other._pairs:
            return self
        return Monomial(list(self._pairs) + list(other._pairs))

    def sort_key(self):
        return (self.degree(), self._pairs)

    def __hash__(self) -> int:
        return hash(self._pairs)

    def __eq__(self, other) -> bool:
        return isinstance(other, Monomial) and self._pairs == other._pairs

    def __str__(self) -> str:
        if not self._pairs:
            return "1"
        return " ".join(
            str(v) if e == 1 else f"{v}^{e}" for v, e in self._pairs
        )

    def __repr__(self) -> str:
        return f"Monomial({self})"


UNIT_MONOMIAL = Monomial()


class Polynomial:
    """Immutable sparse polynomial: a canonical map monomial -> coefficient.

    Canonical form drops exact zeros and coefficients below
    ``COEFF_DROP_RTOL * max|coefficient|``, which keeps deep substitution
    cascades from accumulating floating-point dust.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Monomial, float] | Iterable[tuple[Monomial, float]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[Monomial, float] = {}
        for mono, coeff in items:
            if not isinstance(mono, Monomial):
                raise TypeError(f"term key must be Monomial, got {type(mono)!r}")
            merged[mono] = merged.get(mono, 0.0) + float(coeff)
        if merged:
            cutoff = COEFF_DROP_RTOL * max(abs(c) for c in merged.values())
            merged = {m: c for m, c in merged.items() if c != 0.0 and abs(c) >= cutoff}
        self._terms = merged

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero() -> "Polynomial":
        return Polynomial()

    @staticmethod
    def constant(value: float) -> "Polynomial":
        return Polynomial({UNIT_MONOMIAL: value})

    @staticmethod
    def variable(var: VarId) -> "Polynomial":
        return Polynomial({Monomial({var: 1}): 1.0})

    # -- inspection ----------------------------------------------------------

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, mono: Monomial) -> float:
        return self._terms.get(mono, 0.0)

    def constant_term(self) -> float:
        return self._terms.get(UNIT_MONOMIAL, 0.0)

    def total_degree(self) -> int:
        """Max term degree; 0 for constants and for the zero polynomial."""
        if not self._terms:
            return 0
        return max(m.degree() for m in self._terms)

    def variables(self) -> tuple[VarId, ...]:
        seen: set[VarId] = set()
        for mono in self._terms:
            seen.update(mono.variables())
        return tuple(sorted(seen))

    def max_abs_coefficient(self) -> float:
        if not self._terms:
            return 0.0
        return max(abs(c) for c in self._terms.values())

    # -- ring operations -----------------------------------------------------

    def __add__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        merged = dict(self._terms)
        for mono, coeff in other._terms.items():
            merged[mono] = merged.get(mono, 0.0) + coeff
        return Polynomial(merged)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + other

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial({m: c * other for m, c in self._terms.items()})
        if not isinstance(other, Polynomial):
            return NotImplemented
        out: dict[Monomial, float] = {}
        for ma, ca in self._terms.items():
            for mb, cb in other._terms.items():
                mono = ma.mul(mb)
                out[mono] = out.get(mono, 0.0) + ca * cb
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "Polynomial":
        if exponent < 0:
            raise ValueError("negative powers are not defined")
        result = Polynomial.constant(1.0)
        for _ in range(exponent):
            result = result * self
        return result

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    # -- pipeline operations ---------------------------------------------------

    def substitute(self, target: VarId, replacement: "Polynomial") -> "Polynomial":
        """Replace every occurrence of `target` by `replacement`.

        The replacement must not itself contain the target variable.
        """
        if target in replacement.variables():
            raise SelfReferenceError(f"replacement for {target} contains {target}")
        return self.substitute_many({target: replacement})

    def substitute_many(self, mapping: Mapping[VarId, "Polynomial"]) -> "Polynomial":
        """Simultaneous substitution of several variables."""
        for var, rep in mapping.items():
            if var in rep.variables():
                raise SelfReferenceError(f"replacement for {var} contains {var}")
        accum: dict[Monomial, float] = {}
        for mono, coeff in self._terms.items():
            exps = mono.exponents
            hit = [v for v in exps if v in mapping]
            if not hit:
                accum[mono] = accum.get(mono, 0.0) + coeff
                continue
            kept = Monomial({v: e for v, e in exps.items() if v not in mapping})
            factor = Polynomial({kept: coeff})
            for var in hit:
                factor = factor * (mapping[var] ** exps[var])
            for m, c in factor.items():
                accum[m] = accum.get(m, 0.0) + c
        return Polynomial(accum)

    def evaluate(self, assignment: Mapping[VarId, float]) -> float:
        """Evaluate at a point; raises UnboundVariableError on missing vars."""
        missing = [v for v in self.variables() if v not in assignment]
        if missing:
            raise UnboundVariableError(missing)
        total = 0.0
        for mono, coeff in self._terms.items():
            value = coeff
            for var, exp in mono.pairs:
                value *= assignment[var] ** exp
            total += value
        return total

    def differentiate(self, var: VarId) -> "Polynomial":
        """Formal partial derivative with respect to `var`.

        Only meaningful for real-valued (state/input) variables; exponents of
        binary variables never exceed one anyway.
        """
        out: dict[Monomial, float] = {}
        for mono, coeff in self._terms.items():
            exps = mono.exponents
            exp = exps.pop(var, 0)
            if exp == 0:
                continue
            if exp > 1:
                exps[var] = exp - 1
            reduced = Monomial(exps)
            out[reduced] = out.get(reduced, 0.0) + coeff * exp
        return Polynomial(out)

    def shift_stage(self, delta: int) -> "Polynomial":
        """Shift every variable's time stage by `delta`."""
        return Polynomial(
            {
                Monomial({v.shifted(delta): e for v, e in mono.pairs}): coeff
                for mono, coeff in self._terms.items()
            }
        )

    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        """Terms in the deterministic (degree, lexicographic) order."""
        return sorted(self._terms.items(), key=lambda kv: kv[0].sort_key())

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for mono, coeff in self.sorted_terms():
            if mono.is_unit():
                parts.append(f"{coeff:g}")
            else:
                parts.append(f"{coeff:g} {mono}")
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"Polynomial({self})"


def evaluate_batch(p: Polynomial, var_order: list[VarId], points: np.ndarray) -> np.ndarray:
    """Evaluate `p` at many points at once.

    `points` has one row per assignment and one column per variable in
    `var_order`; every variable of `p` must appear in `var_order`.
    """
    points = np.asarray(points, dtype=float)
    index = {v: i for i, v in enumerate(var_order)}
    missing = [v for v in p.variables() if v not in index]
    if missing:
        raise UnboundVariableError(missing)
    total = np.zeros(points.shape[0])
    for mono, coeff in p.items():
        value = np.full(points.shape[0], coeff)
        for var, exp in mono.pairs:
            col = points[:, index[var]]
            value = value * (col if exp == 1 else col**exp)
        total += value
    return total


def to_text(p: Polynomial) -> str:
    """Serialize one term per line: `coefficient [var[^exp] ...]`."""
    lines = []
    for mono, coeff in p.sorted_terms():
        if mono.is_unit():
            lines.append(f"{coeff!r}")
        else:
            lines.append(f"{coeff!r} {mono}")
    return "\n".join(lines) + ("\n" if lines else "")


def from_text(text: str) -> Polynomial:
    """Parse the `to_text` format; blank lines and `#` comments are ignored."""
    terms: list[tuple[Monomial, float]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        coeff = float(fields[0])
        pairs = [parse_varid(tok) for tok in fields[1:]]
        terms.append((Monomial(pairs), coeff))
    return Polynomial(terms)
