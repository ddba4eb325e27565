"""
Text front end of the STL formulas: a lark LALR grammar, the tree transformer building the formula objects and the
canonical printer. The grammar is documented in docs/stl_grammar.md.

Precedence, loosest first: or, and, until (right associative), unary operators (not, always, eventually).
"""

import math

from lark import Lark, Token, Transformer, v_args
from lark import exceptions as lark_exceptions

from .errors import IntervalError, StlParseError, UnknownPredicateError
from .stl import (
    Always,
    And,
    Atom,
    Eventually,
    Not,
    Or,
    Predicate,
    StlFormula,
    TimeInterval,
    Until,
    get_predicate,
)

GRAMMAR = r"""
?start: disjunction

?disjunction: conjunction
    | disjunction ("|" | "or") conjunction -> or_

?conjunction: until
    | conjunction ("&" | "and") until -> and_

?until: unary
    | unary ("U" | "until") [interval] until -> until

?unary: atom
    | ("!" | "not") unary -> not_
    | ("G" | "always") [interval] unary -> always
    | ("F" | "eventually") [interval] unary -> eventually
    | "(" disjunction ")"

atom: NAME -> atom
    | NAME "(" ")" -> atom
    | NAME "(" SIGNED_NUMBER ("," SIGNED_NUMBER)* ")" -> call
    | "true" -> true_
    | "false" -> false_

interval: "[" SIGNED_NUMBER "," (SIGNED_NUMBER | INF) "]"

INF: "inf"
NAME: /[A-Za-z_][A-Za-z0-9_]*/

%import common.SIGNED_NUMBER
%import common.WS
%ignore WS
"""

_PARSER = Lark(GRAMMAR, parser="lalr", start="start")


@v_args(inline=True)
class _FormulaBuilder(Transformer):
    def or_(self, left, right):
        return Or(left, right)

    def and_(self, left, right):
        return And(left, right)

    def until(self, left, interval, right):
        return Until(interval or TimeInterval(), left, right)

    def not_(self, arg):
        return Not(arg)

    def always(self, interval, arg):
        return Always(interval or TimeInterval(), arg)

    def eventually(self, interval, arg):
        return Eventually(interval or TimeInterval(), arg)

    def true_(self):
        return Atom(Predicate("true"))

    def false_(self):
        return Atom(Predicate("false"))

    def atom(self, name: Token):
        return self.call(name)

    def call(self, name: Token, *args: Token):
        try:
            get_predicate(str(name))
        except UnknownPredicateError:
            raise UnknownPredicateError(f"Unknown predicate '{name}'", name.start_pos) from None
        try:
            return Atom(Predicate(str(name), tuple(float(a) for a in args)))
        except ValueError as e:
            raise StlParseError(str(e), name.start_pos) from None

    def interval(self, lo: Token, hi: Token):
        lo_value = float(lo)
        hi_value = math.inf if hi.type == "INF" else float(hi)
        if lo_value < 0:
            raise IntervalError(f"Interval lower bound must be >= 0, given : {lo_value}", lo.start_pos)
        if hi_value < lo_value:
            raise IntervalError(f"Interval needs lo <= hi, given : [{lo_value}, {hi_value}]", lo.start_pos)
        if not math.isfinite(lo_value) or math.isnan(hi_value):
            raise IntervalError(f"Interval bounds must be numbers, given : [{lo}, {hi}]", lo.start_pos)
        return TimeInterval(lo_value, hi_value)


def parse(text: str) -> StlFormula:
    """
    Parse a formula string.

    Parameters
    ----------
    text: str
        Formula, e.g. "G[0,25] F[0,5] lane_return & G[0,25] safe".

    Returns
    -------
    The formula tree.
    """
    if not isinstance(text, str):
        raise TypeError("The formula must be a string.")
    try:
        tree = _PARSER.parse(text)
        return _FormulaBuilder().transform(tree)
    except lark_exceptions.VisitError as e:
        if isinstance(e.orig_exc, StlParseError):
            raise e.orig_exc from None
        raise
    except lark_exceptions.UnexpectedToken as e:
        if e.token.type == "$END":
            raise StlParseError("Unexpected end of formula (unbalanced parenthesis?)", len(text)) from None
        raise StlParseError(f"Unexpected '{e.token}'", e.token.start_pos) from None
    except lark_exceptions.UnexpectedCharacters as e:
        raise StlParseError(f"Unexpected character '{text[e.pos_in_stream]}'", e.pos_in_stream) from None
    except lark_exceptions.UnexpectedEOF:
        raise StlParseError("Unexpected end of formula (unbalanced parenthesis?)", len(text)) from None


def _number(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return repr(float(value))


def _interval(interval: TimeInterval) -> str:
    return f"[{_number(interval.lo)},{_number(interval.hi)}]"


def to_text(formula: StlFormula) -> str:
    """
    Canonical text of a formula: binary operators fully parenthesized, intervals always written out.
    parse(to_text(f)) == f.
    """
    if isinstance(formula, Atom):
        p = formula.predicate
        if not p.args:
            return p.name
        return f"{p.name}({', '.join(_number(a) for a in p.args)})"
    if isinstance(formula, Not):
        return f"!{to_text(formula.arg)}"
    if isinstance(formula, And):
        return f"({to_text(formula.left)} & {to_text(formula.right)})"
    if isinstance(formula, Or):
        return f"({to_text(formula.left)} | {to_text(formula.right)})"
    if isinstance(formula, Always):
        return f"G{_interval(formula.interval)} {to_text(formula.arg)}"
    if isinstance(formula, Eventually):
        return f"F{_interval(formula.interval)} {to_text(formula.arg)}"
    if isinstance(formula, Until):
        return f"({to_text(formula.left)} U{_interval(formula.interval)} {to_text(formula.right)})"
    raise TypeError(f"Unknown formula node {type(formula).__name__}")
