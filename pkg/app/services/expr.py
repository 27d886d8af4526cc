"""
Polynomial expressions used as entries of stochastic coefficient matrices.

Entries such as "1.3 + x2" or "-1.2 + x1^2" are parsed into a canonical
sparse representation: a tuple of (coefficient, multidegree) terms with no
repeated multidegree and no zero coefficient. Canonical form is restored
after every arithmetic operation so degree bookkeeping stays exact.

Grammar:
    expr   := term (('+'|'-') term)*
    term   := factor ('*' factor)*
    factor := ['-'] (number | var | '(' expr ')') ['^' uint]
    var    := 'x' uint            (1-based)
"""

import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np

from app.errors import DimensionError, ExpressionError

Multidegree = Tuple[int, ...]
Term = Tuple[float, Multidegree]


@dataclass(frozen=True)
class Polynomial:
    """
    Sparse multivariate polynomial in the components of xi.

    Attributes:
        terms: Canonical (coefficient, multidegree) pairs sorted by multidegree
        num_vars: Dimension Z of xi
    """
    terms: Tuple[Term, ...]
    num_vars: int

    @classmethod
    def from_dict(cls, coefficients: Dict[Multidegree, float], num_vars: int) -> "Polynomial":
        """Build the canonical form from a multidegree -> coefficient map."""
        terms = tuple(
            (float(c), tuple(d)) for d, c in sorted(coefficients.items()) if c != 0.0
        )
        return cls(terms, num_vars)

    @classmethod
    def constant(cls, value: float, num_vars: int) -> "Polynomial":
        return cls.from_dict({(0,) * num_vars: float(value)}, num_vars)

    @classmethod
    def zero(cls, num_vars: int) -> "Polynomial":
        return cls((), num_vars)

    @classmethod
    def variable(cls, index: int, num_vars: int) -> "Polynomial":
        """The polynomial x_index (0-based index)."""
        degree = [0] * num_vars
        degree[index] = 1
        return cls(((1.0, tuple(degree)),), num_vars)

    def as_dict(self) -> Dict[Multidegree, float]:
        return {d: c for c, d in self.terms}

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return all(not any(d) for _, d in self.terms)

    def max_degrees(self) -> Tuple[int, ...]:
        """Largest exponent of each variable over all terms."""
        if not self.terms:
            return (0,) * self.num_vars
        return tuple(int(v) for v in np.max([d for _, d in self.terms], axis=0))

    def _check_compatible(self, other: "Polynomial"):
        if self.num_vars != other.num_vars:
            raise DimensionError(
                f"Polynomials over {self.num_vars} and {other.num_vars} variables cannot be combined"
            )

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check_compatible(other)
        merged = self.as_dict()
        for c, d in other.terms:
            merged[d] = merged.get(d, 0.0) + c
        return Polynomial.from_dict(merged, self.num_vars)

    def __neg__(self) -> "Polynomial":
        return self.scale(-1.0)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(tuple(poly_product_monomials(self, other)), self.num_vars)

    def __pow__(self, exponent: int) -> "Polynomial":
        result = Polynomial.constant(1.0, self.num_vars)
        for _ in range(exponent):
            result = result * self
        return result

    def scale(self, factor: float) -> "Polynomial":
        return Polynomial.from_dict({d: factor * c for c, d in self.terms}, self.num_vars)

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of an (N, Z) array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.terms:
            return np.zeros(points.shape[0])
        coefficients = np.array([c for c, _ in self.terms])
        degrees = np.array([d for _, d in self.terms])
        monomials = np.prod(points[:, None, :] ** degrees[None, :, :], axis=2)
        return monomials @ coefficients

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for c, d in self.terms:
            factors = [f"x{i + 1}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(d) if k]
            if not factors:
                parts.append(repr(c))
            elif c == 1.0:
                parts.append("*".join(factors))
            else:
                parts.append("*".join([repr(c)] + factors))
        return " + ".join(parts)


def poly_product_monomials(p: Polynomial, q: Polynomial) -> List[Term]:
    """
    Canonical merged term list of the product p*q.

    Raises:
        DimensionError: If p and q are over different numbers of variables
    """
    p._check_compatible(q)
    merged: Dict[Multidegree, float] = {}
    for cp, dp in p.terms:
        for cq, dq in q.terms:
            d = tuple(a + b for a, b in zip(dp, dq))
            merged[d] = merged.get(d, 0.0) + cp * cq
    return list(Polynomial.from_dict(merged, p.num_vars).terms)


def eval_poly(p: Polynomial, point: Iterable[float]) -> float:
    """
    Evaluate p at a single point.

    Raises:
        DimensionError: If the point length differs from p.num_vars
    """
    point = np.asarray(point, dtype=float).ravel()
    if point.shape[0] != p.num_vars:
        raise DimensionError(f"Point has length {point.shape[0]}, expected {p.num_vars}")
    total = 0.0
    for c, d in p.terms:
        total += c * float(np.prod(point ** np.asarray(d)))
    return total


_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+\.\d*|\.\d+|\d+)|(?P<var>x\d+)|(?P<op>[-+*^()])|(?P<bad>\S))"
)


class _Parser:
    """Recursive-descent parser over the token stream of one expression."""

    def __init__(self, text: str, num_vars: int):
        self.text = text
        self.num_vars = num_vars
        self.tokens = self._tokenize(text)
        self.index = 0

    @staticmethod
    def _tokenize(text: str) -> List[Tuple[str, str, int]]:
        tokens = []
        position = 0
        while position < len(text):
            match = _TOKEN.match(text, position)
            if match is None:  # only trailing whitespace left
                break
            kind = match.lastgroup
            value = match.group(kind)
            start = match.start(kind)
            if kind == "bad":
                raise ExpressionError(f"Unexpected character {value!r}", position=start, text=text)
            tokens.append((kind, value, start))
            position = match.end()
        return tokens

    def _peek(self):
        if self.index < len(self.tokens):
            return self.tokens[self.index]
        return ("end", "", len(self.text))

    def _advance(self):
        token = self._peek()
        self.index += 1
        return token

    def _error(self, message: str, position: int):
        return ExpressionError(message, position=position, text=self.text)

    def parse(self) -> Polynomial:
        if not self.tokens:
            raise self._error("Empty expression", 0)
        result = self._expr()
        kind, value, position = self._peek()
        if kind != "end":
            raise self._error(f"Unexpected token {value!r}", position)
        return result

    def _expr(self) -> Polynomial:
        result = self._term()
        while self._peek()[0] == "op" and self._peek()[1] in "+-":
            _, op, _ = self._advance()
            right = self._term()
            result = result + right if op == "+" else result - right
        return result

    def _term(self) -> Polynomial:
        result = self._factor()
        while self._peek()[:2] == ("op", "*"):
            self._advance()
            result = result * self._factor()
        return result

    def _factor(self) -> Polynomial:
        negate = False
        if self._peek()[:2] == ("op", "-"):
            self._advance()
            negate = True
        base = self._primary()
        if self._peek()[:2] == ("op", "^"):
            self._advance()
            kind, value, position = self._advance()
            if kind != "number" or not value.isdigit():
                raise self._error("Exponent must be a non-negative integer literal", position)
            base = base ** int(value)
        return -base if negate else base

    def _primary(self) -> Polynomial:
        kind, value, position = self._advance()
        if kind == "number":
            return Polynomial.constant(float(value), self.num_vars)
        if kind == "var":
            index = int(value[1:])
            if not 1 <= index <= self.num_vars:
                raise self._error(
                    f"Variable {value} out of range 1..{self.num_vars}", position
                )
            return Polynomial.variable(index - 1, self.num_vars)
        if (kind, value) == ("op", "("):
            inner = self._expr()
            closing = self._advance()
            if closing[:2] != ("op", ")"):
                raise self._error("Expected ')'", closing[2])
            return inner
        if kind == "end":
            raise self._error("Unexpected end of expression", position)
        raise self._error(f"Unexpected token {value!r}", position)


def parse_expr(text: str, num_vars: int) -> Polynomial:
    """
    Parse an entry expression into its canonical polynomial.

    Args:
        text: Expression following the module grammar
        num_vars: Dimension Z of xi

    Raises:
        ExpressionError: On syntax errors (with character position),
            out-of-range variables or non-integer exponents
    """
    return _Parser(str(text), num_vars).parse()
