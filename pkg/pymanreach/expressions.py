"""A small arithmetic grammar for configuration files.

Expressions may contain numbers, ``pi``, the coordinate names declared for
the manifold, the operators ``+ - * / ** ^`` with parentheses, and the
functions ``sin``, ``cos``, ``tan``, ``sqrt`` and ``exp``. Arrays are written
as bracketed, row-major literals of such expressions, e.g.
``[[1, 0], [0, sin(theta)**2]]``.
"""
import re
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from .exceptions import ConfigError

_FUNCTIONS = {
    'sin': sp.sin,
    'cos': sp.cos,
    'tan': sp.tan,
    'sqrt': sp.sqrt,
    'exp': sp.exp,
}
_ALLOWED_HEADS = {sp.sin, sp.cos, sp.tan, sp.exp}
_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def _check(expr, symbols: Sequence[sp.Symbol], field: str) -> sp.Expr:
    if not isinstance(expr, sp.Expr):
        raise ConfigError(field, f"'{expr}' is not an arithmetic expression.")
    unknown = expr.free_symbols - set(symbols)
    if unknown:
        names = ", ".join(sorted(str(s) for s in unknown))
        raise ConfigError(field, f"unknown name(s) {names}.")
    for func in expr.atoms(sp.Function):
        if func.func not in _ALLOWED_HEADS:
            raise ConfigError(field, f"function '{func.func}' is not supported.")
    return expr


_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|[-+*/^(),\[\]]))"
)
# names the standard transformations insert when wrapping literals
_GLOBALS = {
    '__builtins__': {},
    'Integer': sp.Integer,
    'Float': sp.Float,
    'Rational': sp.Rational,
    'Symbol': sp.Symbol,
}


def _check_tokens(text: str, allowed: set, field: str) -> None:
    pos, unknown = 0, []
    text = text.rstrip()
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None or match.end() == pos:
            raise ConfigError(field, f"unexpected character '{text[pos:].lstrip()[:1]}' in '{text}'.")
        name = match.group('name')
        if name is not None and name not in allowed:
            unknown.append(name)
        pos = match.end()
    if unknown:
        raise ConfigError(field, f"unknown name(s) {', '.join(sorted(set(unknown)))}.")


def _parse(text: str, names: Sequence[str], field: str):
    symbols = [sp.Symbol(name) for name in names]
    local_dict = dict(_FUNCTIONS)
    local_dict['pi'] = sp.pi
    local_dict.update({str(s): s for s in symbols})
    _check_tokens(str(text), set(local_dict), field)
    try:
        parsed = parse_expr(
            str(text),
            local_dict=local_dict,
            global_dict=dict(_GLOBALS),
            transformations=_TRANSFORMATIONS,
        )
    except Exception as err:
        raise ConfigError(field, f"cannot parse '{text}' ({err}).") from err
    return parsed, symbols


def parse_expression(text: str, names: Sequence[str] = (), field: str = "expression") -> sp.Expr:
    """Parse a single scalar expression over the coordinate ``names``."""
    parsed, symbols = _parse(text, names, field)
    return _check(sp.sympify(parsed), symbols, field)


def _leaves(tree, symbols, field):
    if isinstance(tree, (list, tuple)):
        return [_leaves(item, symbols, field) for item in tree]
    return _check(sp.sympify(tree), symbols, field)


def parse_array(text: str, names: Sequence[str] = (), field: str = "array") -> list:
    """Parse a bracketed array literal into nested lists of sympy expressions.

    A bare scalar is returned as a one-element list.
    """
    parsed, symbols = _parse(text, names, field)
    if not isinstance(parsed, (list, tuple)):
        parsed = [parsed]
    tree = _leaves(parsed, symbols, field)
    if not _is_rectangular(tree):
        raise ConfigError(field, r"rows of unequal length.")
    return tree


def _is_rectangular(tree) -> bool:
    if not isinstance(tree, list) or not tree:
        return True
    if not isinstance(tree[0], list):
        return all(not isinstance(item, list) for item in tree)
    width = len(tree[0])
    return all(isinstance(row, list) and len(row) == width for row in tree) and all(
        _is_rectangular(row) for row in tree
    )


def evaluate_array(text: str, field: str = "array") -> np.ndarray:
    """Evaluate a constant array literal such as ``[0, pi/2, 0]``."""
    tree = parse_array(text, (), field)
    flat = np.array(tree, dtype=object)
    return np.vectorize(float, otypes=[float])(flat) if flat.size else np.zeros(flat.shape)


def compile_array(
    text: str,
    names: Sequence[str],
    field: str = "array",
) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an array literal over coordinate ``names`` into a numpy function.

    Returns
    -------
    callable
        Maps a coordinate vector to an ndarray with the literal's shape.
    """
    tree = parse_array(text, names, field)
    shape = np.shape(np.array(tree, dtype=object))
    return compile_entries(np.array(tree, dtype=object).ravel().tolist(), names, shape)


def compile_entries(
    entries: Sequence[sp.Expr],
    names: Sequence[str],
    shape: tuple,
) -> Callable[[np.ndarray], np.ndarray]:
    """Lambdify a flat list of expressions and reshape their values."""
    symbols = [sp.Symbol(name) for name in names]
    funcs = [sp.lambdify(symbols, expr, 'numpy') for expr in entries]

    def evaluate(coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        values = [float(f(*coords)) for f in funcs]
        return np.array(values).reshape(shape)

    return evaluate
