"""Small model-formula language for metamodel structure.

Grammar::

    formula  := response '~' term ('+' term)*
    term     := name                     linear term
              | 'I(' name '^' int ')'   raw power, int >= 2
              | name ':' name           product interaction
              | 's(' name [',k=' int] ')'          univariate smooth
              | 'te(' name ',' name [',k=' int] ')' tensor-product smooth
              | '-1'                    drop the implicit intercept

Whitespace is insignificant.  ``- 1`` after a term is accepted as a synonym
for ``+ -1``.  Parse errors carry the byte offset into the input string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<int>\d+)|(?P<sym>[~+\-()^:,=]))"
)


@dataclass(frozen=True)
class Term:
    offset: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Linear(Term):
    name: str = ""


@dataclass(frozen=True)
class Power(Term):
    name: str = ""
    degree: int = 2


@dataclass(frozen=True)
class Interaction(Term):
    names: Tuple[str, str] = ("", "")


@dataclass(frozen=True)
class Smooth(Term):
    name: str = ""
    k: Optional[int] = None


@dataclass(frozen=True)
class TensorSmooth(Term):
    names: Tuple[str, str] = ("", "")
    k: Optional[int] = None


@dataclass(frozen=True)
class Formula:
    response: str
    terms: Tuple[Term, ...]
    intercept: bool = True

    def variables(self) -> List[str]:
        """Covariate names in first-appearance order (response excluded)."""
        seen: List[str] = []
        for t in self.terms:
            names = (
                t.names if isinstance(t, (Interaction, TensorSmooth)) else (t.name,)
            )
            for n in names:
                if n not in seen:
                    seen.append(n)
        return seen


def term_label(term: Term) -> str:
    if isinstance(term, Linear):
        return term.name
    if isinstance(term, Power):
        return f"I({term.name}^{term.degree})"
    if isinstance(term, Interaction):
        return f"{term.names[0]}:{term.names[1]}"
    if isinstance(term, Smooth):
        return f"s({term.name})" if term.k is None else f"s({term.name},k={term.k})"
    if isinstance(term, TensorSmooth):
        a, b = term.names
        return f"te({a},{b})" if term.k is None else f"te({a},{b},k={term.k})"
    raise TypeError(f"unknown term {term!r}")


def format_formula(f: Formula) -> str:
    body = " + ".join(term_label(t) for t in f.terms) if f.terms else "1"
    text = f"{f.response} ~ {body}" if f.response else f"~ {body}"
    if not f.intercept:
        text += " - 1"
    return text


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items: List[tuple] = []  # (kind, value, offset)
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                off = len(text) - len(stripped)
                raise ConfigError(
                    f"formula: unknown token {stripped[0]!r} at offset {off}"
                )
            if m.group("name"):
                self.items.append(("name", m.group("name"), m.start("name")))
            elif m.group("int"):
                self.items.append(("int", m.group("int"), m.start("int")))
            else:
                self.items.append((m.group("sym"), m.group("sym"), m.start("sym")))
            pos = m.end()
        self.items.append(("end", "", len(text)))
        self.i = 0

    def peek(self) -> tuple:
        return self.items[self.i]

    def next(self) -> tuple:
        tok = self.items[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> tuple:
        tok = self.next()
        if tok[0] != kind:
            found = repr(tok[1]) if tok[0] != "end" else "end of input"
            raise ConfigError(
                f"formula: expected {what} at offset {tok[2]}, found {found}"
            )
        return tok


def _parse_smooth_args(toks: _Tokens, n_names: int):
    """Names and optional ,k=int inside s(...) / te(...); consumes ')'."""
    names = []
    for i in range(n_names):
        if i:
            toks.expect(",", "','")
        names.append(toks.expect("name", "a variable name")[1])
    k = None
    if toks.peek()[0] == ",":
        toks.next()
        key = toks.expect("name", "'k'")
        if key[1] != "k":
            raise ConfigError(
                f"formula: expected 'k' at offset {key[2]}, found {key[1]!r}"
            )
        toks.expect("=", "'='")
        k = int(toks.expect("int", "an integer basis size")[1])
    toks.expect(")", "')'")
    return names, k


def _parse_term(toks: _Tokens):
    """One term; returns a Term, None for -1, or "1" for the explicit intercept."""
    tok = toks.next()
    if tok[0] == "-":
        one = toks.expect("int", "'1' after '-'")
        if one[1] != "1":
            raise ConfigError(
                f"formula: expected '1' after '-' at offset {one[2]}, found {one[1]!r}"
            )
        return None
    if tok[0] == "int" and tok[1] == "1":
        return "1"
    if tok[0] != "name":
        found = repr(tok[1]) if tok[0] != "end" else "end of input"
        raise ConfigError(
            f"formula: expected a term at offset {tok[2]}, found {found}"
        )
    name, offset = tok[1], tok[2]
    if name == "I" and toks.peek()[0] == "(":
        toks.next()
        var = toks.expect("name", "a variable name")[1]
        toks.expect("^", "'^'")
        deg = int(toks.expect("int", "an integer power")[1])
        if deg < 2:
            raise ConfigError(
                f"formula: power must be >= 2 at offset {offset} (use the bare name for degree 1)"
            )
        toks.expect(")", "')'")
        return Power(offset, var, deg)
    if name == "s" and toks.peek()[0] == "(":
        toks.next()
        names, k = _parse_smooth_args(toks, 1)
        return Smooth(offset, names[0], k)
    if name == "te" and toks.peek()[0] == "(":
        toks.next()
        names, k = _parse_smooth_args(toks, 2)
        return TensorSmooth(offset, (names[0], names[1]), k)
    if toks.peek()[0] == ":":
        toks.next()
        other = toks.expect("name", "a variable name after ':'")
        return Interaction(offset, (name, other[1]))
    return Linear(offset, name)


def parse_formula(text: str) -> Formula:
    """Parse one formula; the response may be omitted (text starting with '~')
    for component formulas whose response is supplied by the caller."""
    toks = _Tokens(text)
    if toks.peek()[0] == "~":
        response = ""
        toks.next()
    else:
        response = toks.expect("name", "a response name")[1]
        toks.expect("~", "'~'")
    terms: List[Term] = []
    intercept = True
    while True:
        term = _parse_term(toks)
        if term is None:
            if not intercept:
                raise ConfigError("formula: duplicate '-1'")
            intercept = False
        elif term == "1":
            pass
        else:
            if term in terms:
                raise ConfigError(
                    f"formula: duplicate term {term_label(term)!r} at offset {term.offset}"
                )
            terms.append(term)
        tok = toks.next()
        if tok[0] == "end":
            break
        if tok[0] == "-":
            # R-style trailing "- 1"
            one = toks.expect("int", "'1' after '-'")
            if one[1] != "1":
                raise ConfigError(
                    f"formula: expected '1' after '-' at offset {one[2]}, found {one[1]!r}"
                )
            if not intercept:
                raise ConfigError("formula: duplicate '-1'")
            intercept = False
            tok = toks.next()
            if tok[0] == "end":
                break
        if tok[0] != "+":
            found = repr(tok[1])
            raise ConfigError(
                f"formula: expected '+' at offset {tok[2]}, found {found}"
            )
    return Formula(response=response, terms=tuple(terms), intercept=intercept)


@dataclass(frozen=True)
class RealizedDesign:
    """Parametric design matrix plus the smooth terms still to be built."""

    matrix: np.ndarray
    column_names: Tuple[str, ...]
    smooths: Tuple[Term, ...]
    response: np.ndarray


def _resolve(data: Dict[str, np.ndarray], name: str, offset: int) -> np.ndarray:
    try:
        return np.asarray(data[name], dtype=float)
    except KeyError:
        where = f" at offset {offset}" if offset >= 0 else ""
        raise ConfigError(
            f"formula: unknown variable {name!r}{where}; "
            f"available: {sorted(data)}"
        ) from None


def realize_design(formula: Formula, data: Dict[str, np.ndarray]) -> RealizedDesign:
    """Build the parametric columns in formula order; smooths pass through.

    ``data`` maps variable names to equal-length 1-d arrays.  A formula with
    no response, or whose response column is absent (prediction on new data),
    yields ``response=None``.
    """
    if formula.response and formula.response in data:
        y = _resolve(data, formula.response, -1)
        n = y.shape[0]
    else:
        y = None
        if not data:
            raise ConfigError("formula: empty data table")
        n = len(next(iter(data.values())))
    cols: List[np.ndarray] = []
    names: List[str] = []
    smooths: List[Term] = []
    if formula.intercept:
        cols.append(np.ones(n))
        names.append("(Intercept)")
    for term in formula.terms:
        if isinstance(term, Linear):
            cols.append(_resolve(data, term.name, term.offset))
            names.append(term_label(term))
        elif isinstance(term, Power):
            cols.append(_resolve(data, term.name, term.offset) ** term.degree)
            names.append(term_label(term))
        elif isinstance(term, Interaction):
            a = _resolve(data, term.names[0], term.offset)
            b = _resolve(data, term.names[1], term.offset)
            cols.append(a * b)
            names.append(term_label(term))
        elif isinstance(term, (Smooth, TensorSmooth)):
            for nm in term.names if isinstance(term, TensorSmooth) else (term.name,):
                _resolve(data, nm, term.offset)
            smooths.append(term)
        else:
            raise TypeError(f"unknown term {term!r}")
    for c in cols:
        if c.shape != (n,):
            raise ConfigError(
                f"formula: all variables must be 1-d arrays of length {n}"
            )
    matrix = np.column_stack(cols) if cols else np.empty((n, 0))
    return RealizedDesign(
        matrix=matrix,
        column_names=tuple(names),
        smooths=tuple(smooths),
        response=y,
    )
