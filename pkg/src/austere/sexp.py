"""Surface language: s-expression reader, directive grammar, desugaring.

Programs are lists of bracketed directives:

    [assume name expression]
    [observe expression literal]
    [predict expression (label)]
    [infer inference-expression]

Expressions are Scheme-style forms. `#` starts a comment running to end of
line. Numeric literals become 64-bit floats, true/false become booleans,
'sym quotes a symbol, and {name} / {name[i]} are external-parameter
placeholders resolved by desugar_program before evaluation.
"""

import numbers
import re

import numpy as np

from austere.errors import ParseError, UnboundParameter
from austere.proposals import GaussianDrift, PriorResimulation

RESERVED = ("if", "lambda", "mem", "scope_include")

_TOKEN_RE = re.compile(
    r"""
      (?P<comment>\#[^\n]*)
    | (?P<brace>\{[^{}\s]*\})
    | (?P<open>[\(\[])
    | (?P<close>[\)\]])
    | (?P<quote>')
    | (?P<atom>[^\s\(\)\[\]'{}#]+)
    | (?P<ws>\s+)
    """,
    re.VERBOSE,
)

_NUMBER_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_PLACEHOLDER_RE = re.compile(r"^\{([A-Za-z_][A-Za-z0-9_]*)(\[(\d+)\])?\}$")


# --- AST ---------------------------------------------------------------


class Expression:
    __slots__ = ()


class Constant(Expression):
    """Literal value: bool, float, quoted-symbol string, or vector."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __repr__(self):
        return "Constant(%r)" % (self.value,)


class Symbol(Expression):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return "Symbol(%s)" % self.name


class Placeholder(Expression):
    """{name} or {name[i]} external parameter, eliminated by desugaring."""

    __slots__ = ("name", "index")

    def __init__(self, name, index=None):
        self.name = name
        self.index = index

    def __repr__(self):
        if self.index is None:
            return "Placeholder(%s)" % self.name
        return "Placeholder(%s[%d])" % (self.name, self.index)


class Lambda(Expression):
    __slots__ = ("params", "body")

    def __init__(self, params, body):
        self.params = tuple(params)
        self.body = body

    def __repr__(self):
        return "Lambda(%s)" % (",".join(self.params))


class If(Expression):
    __slots__ = ("predicate", "consequent", "alternative")

    def __init__(self, predicate, consequent, alternative):
        self.predicate = predicate
        self.consequent = consequent
        self.alternative = alternative

    def __repr__(self):
        return "If(...)"


class Combination(Expression):
    __slots__ = ("operator", "operands")

    def __init__(self, operator, operands):
        self.operator = operator
        self.operands = tuple(operands)

    def __repr__(self):
        return "Combination(%r, %d operands)" % (self.operator, len(self.operands))


# --- Directives --------------------------------------------------------


class Directive:
    __slots__ = ()


class Assume(Directive):
    __slots__ = ("name", "expression")

    def __init__(self, name, expression):
        self.name = name
        self.expression = expression

    def __repr__(self):
        return "Assume(%s)" % self.name


class Observe(Directive):
    """value is a Constant or Placeholder leaf; a plain literal after desugar."""

    __slots__ = ("expression", "value")

    def __init__(self, expression, value):
        self.expression = expression
        self.value = value

    def __repr__(self):
        return "Observe(...)"


class Predict(Directive):
    __slots__ = ("expression", "label")

    def __init__(self, expression, label):
        self.expression = expression
        self.label = label

    def __repr__(self):
        return "Predict(%s)" % self.label


class Infer(Directive):
    __slots__ = ("expression",)

    def __init__(self, expression):
        self.expression = expression

    def __repr__(self):
        return "Infer(%r)" % (self.expression,)


# --- Inference expressions ----------------------------------------------


class InferExpression:
    __slots__ = ()

    def validate(self):
        pass


def _check_count(value, what, minimum):
    if isinstance(value, Placeholder):
        return
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ParseError("%s must be a number" % what)
    if value != int(value) or value < minimum:
        raise ParseError("%s must be an integer >= %d, got %r" % (what, minimum, value))


def _as_count(value):
    """Counts read from source are floats; carry them as ints once checked."""
    if isinstance(value, Placeholder) or isinstance(value, bool):
        return value
    if isinstance(value, numbers.Real) and value == int(value):
        return int(value)
    return value


class MHInfer(InferExpression):
    """(mh scope target steps) with an optional ('drift sigma) clause."""

    __slots__ = ("scope", "target", "steps", "proposal")

    def __init__(self, scope, target, steps, proposal=None):
        self.scope = scope
        self.target = target
        self.steps = _as_count(steps)
        self.proposal = proposal if proposal is not None else PriorResimulation()

    def validate(self):
        _check_count(self.steps, "mh step count", 0)
        self.proposal.validate()

    def __repr__(self):
        return "MHInfer(%s, %r, %r)" % (self.scope, self.target, self.steps)


class SubsampledMHInfer(InferExpression):
    __slots__ = ("scope", "target", "batch_size", "tolerance", "steps", "proposal")

    def __init__(self, scope, target, batch_size, tolerance, steps, proposal=None):
        self.scope = scope
        self.target = target
        self.batch_size = _as_count(batch_size)
        self.tolerance = tolerance
        self.steps = _as_count(steps)
        self.proposal = proposal if proposal is not None else PriorResimulation()

    def validate(self):
        _check_count(self.batch_size, "subsampled_mh batch size", 1)
        _check_count(self.steps, "subsampled_mh step count", 0)
        eps = self.tolerance
        if isinstance(eps, Placeholder):
            return
        if isinstance(eps, bool) or not isinstance(eps, numbers.Real):
            raise ParseError("subsampled_mh tolerance must be a number")
        if not 0.0 < eps < 1.0:
            raise ParseError(
                "subsampled_mh tolerance must lie strictly between 0 and 1, got %r" % eps
            )
        self.proposal.validate()

    def __repr__(self):
        return "SubsampledMHInfer(%s, %r, m=%r, eps=%r, %r)" % (
            self.scope,
            self.target,
            self.batch_size,
            self.tolerance,
            self.steps,
        )


class CycleInfer(InferExpression):
    __slots__ = ("kernels", "repeats")

    def __init__(self, kernels, repeats):
        self.kernels = tuple(kernels)
        self.repeats = _as_count(repeats)

    def validate(self):
        _check_count(self.repeats, "cycle repeat count", 0)
        for k in self.kernels:
            k.validate()

    def __repr__(self):
        return "CycleInfer(%d kernels, %r)" % (len(self.kernels), self.repeats)


class ForeignKernel(InferExpression):
    """Recognized-but-unsupported kernel form (gibbs, pgibbs, ...)."""

    __slots__ = ("name", "args")

    def __init__(self, name, args):
        self.name = name
        self.args = tuple(args)

    def __repr__(self):
        return "ForeignKernel(%s)" % self.name


# --- Tokenizer ----------------------------------------------------------


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text):
    tokens = []
    line = 1
    line_start = 0
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError("unexpected character %r" % text[pos], line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, chunk, line, m.start() - line_start + 1))
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = m.start() + chunk.rfind("\n") + 1
        pos = m.end()
    return tokens


def _atom(token):
    text = token.text
    if text == "true":
        return Constant(True)
    if text == "false":
        return Constant(False)
    if _NUMBER_RE.match(text):
        return Constant(float(text))
    return Symbol(text)


def _placeholder(token):
    m = _PLACEHOLDER_RE.match(token.text)
    if m is None:
        raise ParseError("malformed placeholder %s" % token.text, token.line, token.col)
    index = int(m.group(3)) if m.group(3) is not None else None
    return Placeholder(m.group(1), index)


class _Reader:
    """Turns the token stream into nested lists of tokens/AST leaves."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def at_end(self):
        return self.pos >= len(self.tokens)

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def read_form(self):
        if self.at_end():
            raise ParseError("unexpected end of input")
        tok = self.next()
        if tok.kind == "open":
            closer = ")" if tok.text == "(" else "]"
            items = []
            while True:
                if self.at_end():
                    raise ParseError("unclosed %r" % tok.text, tok.line, tok.col)
                nxt = self.peek()
                if nxt.kind == "close":
                    self.next()
                    if nxt.text != closer:
                        raise ParseError(
                            "mismatched %r closed by %r" % (tok.text, nxt.text),
                            nxt.line,
                            nxt.col,
                        )
                    return items
                items.append(self.read_form())
        if tok.kind == "close":
            raise ParseError("unbalanced %r" % tok.text, tok.line, tok.col)
        if tok.kind == "quote":
            if self.at_end() or self.peek().kind != "atom":
                raise ParseError("dangling quote", tok.line, tok.col)
            return Constant(self.next().text)
        if tok.kind == "brace":
            return _placeholder(tok)
        return tok  # atom token; context decides symbol vs literal


def _leaf(item):
    if isinstance(item, _Token):
        return _atom(item)
    return item


def _form_head(form):
    if form and isinstance(form[0], _Token):
        return form[0].text
    return None


# --- Expression construction --------------------------------------------


def _expression(form):
    if not isinstance(form, list):
        item = _leaf(form)
        if isinstance(item, (Constant, Placeholder, Symbol)):
            return item
        raise ParseError("bad expression leaf")
    if not form:
        raise ParseError("empty combination ()")
    head = _form_head(form)
    if head == "if":
        if len(form) != 4:
            raise ParseError("if needs predicate, consequent, alternative")
        return If(_expression(form[1]), _expression(form[2]), _expression(form[3]))
    if head == "lambda":
        if len(form) != 3 or not isinstance(form[1], list):
            raise ParseError("lambda needs a parameter list and a body")
        params = []
        for p in form[1]:
            if not isinstance(p, _Token) or not isinstance(_atom(p), Symbol):
                raise ParseError("lambda parameters must be symbols")
            if p.text in RESERVED:
                raise ParseError("reserved word %r cannot be a parameter" % p.text)
            params.append(p.text)
        if len(set(params)) != len(params):
            raise ParseError("duplicate lambda parameter")
        return Lambda(params, _expression(form[2]))
    operator = _expression(form[0])
    operands = [_expression(f) for f in form[1:]]
    if head == "scope_include":
        # (scope_include 'name label expr); 2-arg form defaults label to 0
        if len(operands) == 2:
            operands = [operands[0], Constant(0.0), operands[1]]
        if len(operands) != 3 or not (
            isinstance(operands[0], Constant) and isinstance(operands[0].value, str)
        ):
            raise ParseError("scope_include needs a quoted scope name, a label, and a body")
    if head == "mem":
        if len(operands) != 1:
            raise ParseError("mem takes exactly one procedure argument")
    return Combination(operator, operands)


def _target(form):
    item = _leaf(form)
    if isinstance(item, Symbol):
        if item.name in ("all", "one"):
            return item.name
        raise ParseError("inference target must be all, one, or a label literal")
    if isinstance(item, Placeholder):
        return item
    if isinstance(item, Constant):
        return item.value
    raise ParseError("bad inference target")


def _scalar(form, what):
    item = _leaf(form)
    if isinstance(item, Placeholder):
        return item
    if isinstance(item, Constant) and isinstance(item.value, float):
        return item.value
    raise ParseError("%s must be a number" % what)


def _scope_name(form):
    item = _leaf(form)
    if isinstance(item, Symbol):
        return item.name
    if isinstance(item, Constant) and isinstance(item.value, str):
        return item.value
    raise ParseError("scope must be a symbol")


def _find_drift(args, what):
    """Locate a 'drift clause; returns its index or None."""
    for i, a in enumerate(args):
        if isinstance(a, list):
            continue
        item = _leaf(a)
        if isinstance(item, Constant) and item.value == "drift":
            if i != len(args) - 3:
                raise ParseError(
                    "%s: 'drift takes a single width before the step count" % what
                )
            return i
    return None


def _infer_expression(form):
    if not isinstance(form, list) or not form:
        raise ParseError("inference expression must be a parenthesized form")
    head = _form_head(form)
    args = form[1:]
    if head == "mh":
        proposal = None
        rest = args
        i = _find_drift(args, "mh")
        if i is not None:
            proposal = GaussianDrift(_scalar(args[i + 1], "drift width"))
            rest = args[:i] + args[i + 2 :]
        if len(rest) != 3:
            raise ParseError("mh needs scope, target, and step count")
        return MHInfer(_scope_name(rest[0]), _target(rest[1]), _scalar(rest[2], "mh steps"), proposal)
    if head == "subsampled_mh":
        proposal = None
        rest = args
        i = _find_drift(args, "subsampled_mh")
        if i is not None:
            proposal = GaussianDrift(_scalar(args[i + 1], "drift width"))
            rest = args[:i] + args[i + 2 :]
        if len(rest) != 5:
            raise ParseError(
                "subsampled_mh needs scope, target, batch size, tolerance, and step count"
            )
        out = SubsampledMHInfer(
            _scope_name(rest[0]),
            _target(rest[1]),
            _scalar(rest[2], "batch size"),
            _scalar(rest[3], "tolerance"),
            _scalar(rest[4], "steps"),
            proposal,
        )
        out.validate()
        return out
    if head == "cycle":
        if len(args) != 2 or not isinstance(args[0], list):
            raise ParseError("cycle needs a kernel list and a repeat count")
        kernels = [_infer_expression(k) for k in args[0]]
        return CycleInfer(kernels, _scalar(args[1], "cycle repeats"))
    if head is None:
        raise ParseError("inference expression must start with a kernel name")
    # parsed but not runnable here (gibbs, pgibbs, ...)
    return ForeignKernel(head, [repr(_leaf(a)) if not isinstance(a, list) else "(...)" for a in args])


# --- Directive parsing ---------------------------------------------------


def parse_program(text):
    """Parse program text into a list of directives. Deterministic, no side
    effects; raises ParseError with source position on malformed input."""
    reader = _Reader(_tokenize(text))
    directives = []
    while not reader.at_end():
        tok = reader.peek()
        if tok.kind != "open" or tok.text != "[":
            raise ParseError("expected a [directive]", tok.line, tok.col)
        form = reader.read_form()
        directives.append(_directive(form, tok))
    return directives


def _directive(form, tok):
    head = _form_head(form)
    if head == "assume":
        if len(form) != 3 or not isinstance(form[1], _Token):
            raise ParseError("assume needs a name and an expression", tok.line, tok.col)
        name_leaf = _atom(form[1])
        if not isinstance(name_leaf, Symbol):
            raise ParseError("assume name must be a symbol", tok.line, tok.col)
        if name_leaf.name in RESERVED:
            raise ParseError(
                "reserved word %r cannot be assumed" % name_leaf.name, tok.line, tok.col
            )
        return Assume(name_leaf.name, _expression(form[2]))
    if head == "observe":
        if len(form) != 3:
            raise ParseError("observe needs an expression and a literal", tok.line, tok.col)
        value = _leaf(form[2]) if not isinstance(form[2], list) else None
        if not isinstance(value, (Constant, Placeholder)):
            raise ParseError("observe value must be a literal", tok.line, tok.col)
        return Observe(_expression(form[1]), value)
    if head == "predict":
        if len(form) == 2:
            expr = _expression(form[1])
            return Predict(expr, pretty_expression(expr))
        if len(form) == 3 and isinstance(form[2], _Token):
            label_leaf = _atom(form[2])
            label = label_leaf.name if isinstance(label_leaf, Symbol) else label_leaf.value
            return Predict(_expression(form[1]), label)
        raise ParseError("predict needs an expression and an optional label", tok.line, tok.col)
    if head == "infer":
        if len(form) != 2:
            raise ParseError("infer needs one inference expression", tok.line, tok.col)
        expr = _infer_expression(form[1])
        return Infer(expr)
    raise ParseError("unknown directive %r" % head, tok.line, tok.col)


# --- Desugaring ----------------------------------------------------------


def _resolve(ph, bindings):
    if ph.name not in bindings:
        raise UnboundParameter("no binding for {%s}" % ph.name)
    value = bindings[ph.name]
    if ph.index is not None:
        try:
            value = value[ph.index]
        except (TypeError, IndexError, KeyError):
            raise UnboundParameter(
                "binding %s has no element %d" % (ph.name, ph.index)
            ) from None
    return _to_value(value)


def _to_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, numbers.Real):
        return float(value)
    if isinstance(value, np.ndarray):
        return np.asarray(value, dtype=float)
    if isinstance(value, (list, tuple)):
        if all(isinstance(v, (bool, np.bool_)) for v in value):
            return [bool(v) for v in value]
        return np.asarray(value, dtype=float)
    if isinstance(value, str):
        return value
    raise UnboundParameter("unsupported binding value %r" % (value,))


def _desugar_expr(expr, bindings):
    if isinstance(expr, Placeholder):
        return Constant(_resolve(expr, bindings))
    if isinstance(expr, (Constant, Symbol)):
        return expr
    if isinstance(expr, Lambda):
        return Lambda(expr.params, _desugar_expr(expr.body, bindings))
    if isinstance(expr, If):
        return If(
            _desugar_expr(expr.predicate, bindings),
            _desugar_expr(expr.consequent, bindings),
            _desugar_expr(expr.alternative, bindings),
        )
    if isinstance(expr, Combination):
        return Combination(
            _desugar_expr(expr.operator, bindings),
            [_desugar_expr(o, bindings) for o in expr.operands],
        )
    raise ParseError("cannot desugar %r" % (expr,))


def _desugar_scalar(value, bindings, what, validator=None):
    if isinstance(value, Placeholder):
        value = _resolve(value, bindings)
    return value


def _desugar_infer(expr, bindings):
    if isinstance(expr, MHInfer):
        out = MHInfer(
            expr.scope,
            _desugar_scalar(expr.target, bindings, "target"),
            _desugar_scalar(expr.steps, bindings, "steps"),
            expr.proposal.resolve(bindings),
        )
    elif isinstance(expr, SubsampledMHInfer):
        out = SubsampledMHInfer(
            expr.scope,
            _desugar_scalar(expr.target, bindings, "target"),
            _desugar_scalar(expr.batch_size, bindings, "batch size"),
            _desugar_scalar(expr.tolerance, bindings, "tolerance"),
            _desugar_scalar(expr.steps, bindings, "steps"),
            expr.proposal.resolve(bindings),
        )
    elif isinstance(expr, CycleInfer):
        out = CycleInfer(
            [_desugar_infer(k, bindings) for k in expr.kernels],
            _desugar_scalar(expr.repeats, bindings, "repeats"),
        )
    else:
        return expr
    out.validate()
    return out


def desugar_program(directives, bindings=None):
    """Substitute {placeholder} literals and validate inference expressions.

    Purely textual in spirit: the result is a new directive list with every
    Placeholder replaced by a Constant carrying the bound value.
    """
    bindings = bindings or {}
    out = []
    for d in directives:
        if isinstance(d, Assume):
            out.append(Assume(d.name, _desugar_expr(d.expression, bindings)))
        elif isinstance(d, Observe):
            value = d.value
            if isinstance(value, Placeholder):
                value = Constant(_resolve(value, bindings))
            out.append(Observe(_desugar_expr(d.expression, bindings), value))
        elif isinstance(d, Predict):
            out.append(Predict(_desugar_expr(d.expression, bindings), d.label))
        elif isinstance(d, Infer):
            out.append(Infer(_desugar_infer(d.expression, bindings)))
        else:
            raise ParseError("unknown directive %r" % (d,))
    return out


# --- Pretty printer -------------------------------------------------------


def _pretty_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return "'" + value
    if isinstance(value, np.ndarray):
        return "(vector %s)" % " ".join(repr(float(v)) for v in value)
    if isinstance(value, list):
        return "(vector %s)" % " ".join(_pretty_value(v) for v in value)
    return repr(value)


def pretty_expression(expr):
    if isinstance(expr, Constant):
        return _pretty_value(expr.value)
    if isinstance(expr, Symbol):
        return expr.name
    if isinstance(expr, Placeholder):
        if expr.index is None:
            return "{%s}" % expr.name
        return "{%s[%d]}" % (expr.name, expr.index)
    if isinstance(expr, Lambda):
        return "(lambda (%s) %s)" % (" ".join(expr.params), pretty_expression(expr.body))
    if isinstance(expr, If):
        return "(if %s %s %s)" % (
            pretty_expression(expr.predicate),
            pretty_expression(expr.consequent),
            pretty_expression(expr.alternative),
        )
    if isinstance(expr, Combination):
        parts = [pretty_expression(expr.operator)]
        parts.extend(pretty_expression(o) for o in expr.operands)
        return "(%s)" % " ".join(parts)
    raise ParseError("cannot print %r" % (expr,))


def _pretty_proposal(proposal):
    if isinstance(proposal, GaussianDrift):
        width = proposal.width
        return " 'drift %s" % (repr(width) if not isinstance(width, Placeholder) else pretty_expression(width))
    return ""


def _pretty_count(value):
    if isinstance(value, Placeholder):
        return pretty_expression(value)
    if isinstance(value, float):
        return repr(value)
    return repr(value)


def pretty_infer(expr):
    if isinstance(expr, MHInfer):
        return "(mh '%s %s%s %s)" % (
            expr.scope,
            _pretty_target(expr.target),
            _pretty_proposal(expr.proposal),
            _pretty_count(expr.steps),
        )
    if isinstance(expr, SubsampledMHInfer):
        return "(subsampled_mh '%s %s %s %s%s %s)" % (
            expr.scope,
            _pretty_target(expr.target),
            _pretty_count(expr.batch_size),
            _pretty_count(expr.tolerance),
            _pretty_proposal(expr.proposal),
            _pretty_count(expr.steps),
        )
    if isinstance(expr, CycleInfer):
        return "(cycle (%s) %s)" % (
            " ".join(pretty_infer(k) for k in expr.kernels),
            _pretty_count(expr.repeats),
        )
    if isinstance(expr, ForeignKernel):
        return "(%s)" % expr.name
    raise ParseError("cannot print %r" % (expr,))


def _pretty_target(target):
    if target in ("all", "one"):
        return target
    if isinstance(target, Placeholder):
        return pretty_expression(target)
    return _pretty_value(target)


def pretty_print(directives):
    """Render directives back to program text; parse(pretty_print(p)) is
    structurally equal to p."""
    lines = []
    for d in directives:
        if isinstance(d, Assume):
            lines.append("[assume %s %s]" % (d.name, pretty_expression(d.expression)))
        elif isinstance(d, Observe):
            lines.append(
                "[observe %s %s]"
                % (pretty_expression(d.expression), pretty_expression(d.value))
            )
        elif isinstance(d, Predict):
            lines.append("[predict %s %s]" % (pretty_expression(d.expression), d.label))
        elif isinstance(d, Infer):
            lines.append("[infer %s]" % pretty_infer(d.expression))
        else:
            raise ParseError("cannot print directive %r" % (d,))
    return "\n".join(lines) + "\n"


# --- Structural equality (used by round-trip tests) -----------------------


def ast_equal(a, b):
    if type(a) is not type(b):
        return False
    if isinstance(a, Constant):
        va, vb = a.value, b.value
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            return (
                isinstance(va, np.ndarray)
                and isinstance(vb, np.ndarray)
                and va.shape == vb.shape
                and bool(np.all(va == vb))
            )
        return type(va) is type(vb) and va == vb
    if isinstance(a, Symbol):
        return a.name == b.name
    if isinstance(a, Placeholder):
        return a.name == b.name and a.index == b.index
    if isinstance(a, Lambda):
        return a.params == b.params and ast_equal(a.body, b.body)
    if isinstance(a, If):
        return (
            ast_equal(a.predicate, b.predicate)
            and ast_equal(a.consequent, b.consequent)
            and ast_equal(a.alternative, b.alternative)
        )
    if isinstance(a, Combination):
        return (
            ast_equal(a.operator, b.operator)
            and len(a.operands) == len(b.operands)
            and all(ast_equal(x, y) for x, y in zip(a.operands, b.operands))
        )
    if isinstance(a, Assume):
        return a.name == b.name and ast_equal(a.expression, b.expression)
    if isinstance(a, Observe):
        return ast_equal(a.expression, b.expression) and ast_equal(a.value, b.value)
    if isinstance(a, Predict):
        return a.label == b.label and ast_equal(a.expression, b.expression)
    if isinstance(a, Infer):
        return infer_equal(a.expression, b.expression)
    return a == b


def infer_equal(a, b):
    if type(a) is not type(b):
        return False
    if isinstance(a, MHInfer):
        return (
            a.scope == b.scope
            and a.target == b.target
            and a.steps == b.steps
            and a.proposal == b.proposal
        )
    if isinstance(a, SubsampledMHInfer):
        return (
            a.scope == b.scope
            and a.target == b.target
            and a.batch_size == b.batch_size
            and a.tolerance == b.tolerance
            and a.steps == b.steps
            and a.proposal == b.proposal
        )
    if isinstance(a, CycleInfer):
        return (
            a.repeats == b.repeats
            and len(a.kernels) == len(b.kernels)
            and all(infer_equal(x, y) for x, y in zip(a.kernels, b.kernels))
        )
    if isinstance(a, ForeignKernel):
        return a.name == b.name
    return False


def program_equal(a, b):
    return len(a) == len(b) and all(ast_equal(x, y) for x, y in zip(a, b))
