"""Execution traces: the mutable DAG a probabilistic program leaves behind.

Every executed non-symbol expression creates one node. Symbol lookups resolve
to the existing node so a consumer's statistical parents point straight at the
values it reads. Value edges (parents/children) carry the density
factorization: the joint log density is the sum of each stochastic node's
conditional log density given its parents' current values. Existential edges
record which node's value decides whether a node exists at all (if-branch
bodies, memoized families keyed by argument values).

Transitions mutate traces through three primitives that this module owns:
detach (unset a fragment, collecting the current-state weights), regenerate
(propose and rebuild it, collecting proposed-state weights), restore (put the
pre-proposal state back bit for bit). Deterministic nodes are repaired lazily:
an accepted subsampled transition leaves untouched sections holding old
values, and refresh_stale recomputes them on first read by comparing version
counters, so staleness is never observable through the read API.
"""

import hashlib
import math
import numbers
import struct
import time

import numpy as np

from austere.distributions import Distribution, get_family, linear_logistic
from austere.errors import (
    DimensionMismatch,
    DomainError,
    EvalError,
    InternalError,
    StructureChangeError,
    SupportError,
)
from austere.sexp import (
    Assume,
    Combination,
    Constant,
    If,
    Infer,
    Lambda,
    Observe,
    Placeholder,
    Predict,
    Symbol,
)

KIND_CONSTANT = 0
KIND_LOOKUP = 1
KIND_DET = 2
KIND_STOCH = 3

KIND_NAMES = {
    KIND_CONSTANT: "constant",
    KIND_LOOKUP: "lookup",
    KIND_DET: "det",
    KIND_STOCH: "stoch",
}


class Env:
    """Lexically scoped name -> NodeId frames."""

    __slots__ = ("table", "parent")

    def __init__(self, parent=None, table=None):
        self.table = table if table is not None else {}
        self.parent = parent

    def lookup(self, name):
        env = self
        while env is not None:
            nid = env.table.get(name)
            if nid is not None:
                return nid
            env = env.parent
        raise EvalError("unbound symbol %r" % name)

    def bind(self, name, nid):
        self.table[name] = nid


class CompoundProcedure:
    __slots__ = ("params", "body", "env")

    def __init__(self, params, body, env):
        self.params = params
        self.body = body
        self.env = env

    def __repr__(self):
        return "<procedure (%s)>" % " ".join(self.params)


class MemProcedure:
    """Memoized wrapper: one evaluated family per distinct argument tuple."""

    __slots__ = ("proc_nid", "table")

    def __init__(self, proc_nid):
        self.proc_nid = proc_nid
        self.table = {}

    def __repr__(self):
        return "<mem of node %d, %d families>" % (self.proc_nid, len(self.table))


class PrimitiveProc:
    __slots__ = ("name", "fn")

    def __init__(self, name, fn):
        self.name = name
        self.fn = fn

    def __repr__(self):
        return "<primitive %s>" % self.name


class Node:
    __slots__ = (
        "nid",
        "kind",
        "value",
        "parents",
        "children",
        "exist_parent",
        "exist_children",
        "log_density",
        "version",
        "stale",
        "observed",
        "family",
        "recipe",
        "path",
    )

    def __init__(self, nid, kind, value, parents, recipe=None, family=None, path=None):
        self.nid = nid
        self.kind = kind
        self.value = value
        self.parents = parents
        self.children = []
        self.exist_parent = None
        self.exist_children = None
        self.log_density = None
        self.version = 0
        self.stale = False
        self.observed = False
        self.family = family
        self.recipe = recipe
        self.path = path

    def __repr__(self):
        return "Node(%d, %s)" % (self.nid, KIND_NAMES[self.kind])


# --- deterministic primitives ---------------------------------------------


def _need_real(x, op):
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        if isinstance(x, np.ndarray):
            return x
        raise EvalError("%s expects numbers, got %r" % (op, x))
    return float(x)


def _fold(op, args, fn, unit=None):
    if not args:
        if unit is None:
            raise EvalError("%s needs at least one argument" % op)
        return unit
    acc = _need_real(args[0], op)
    for a in args[1:]:
        acc = fn(acc, _need_real(a, op))
    return acc


def _prim_add(*args):
    return _fold("+", args, lambda a, b: a + b, 0.0)


def _prim_mul(*args):
    return _fold("*", args, lambda a, b: a * b, 1.0)


def _prim_sub(*args):
    if len(args) == 1:
        return -_need_real(args[0], "-")
    if len(args) != 2:
        raise EvalError("- takes one or two arguments")
    return _need_real(args[0], "-") - _need_real(args[1], "-")


def _prim_div(a, b):
    a = _need_real(a, "/")
    b = _need_real(b, "/")
    if isinstance(b, float) and b == 0.0:
        raise EvalError("division by zero")
    return a / b


def _cmp(name, fn):
    def prim(a, b):
        return bool(fn(_need_real(a, name), _need_real(b, name)))

    return prim


def _prim_exp(x):
    return math.exp(_need_real(x, "exp"))


def _prim_log(x):
    x = _need_real(x, "log")
    if x <= 0.0:
        raise DomainError("log of a non-positive number")
    return math.log(x)


def _prim_sqrt(x):
    x = _need_real(x, "sqrt")
    if x < 0.0:
        raise DomainError("sqrt of a negative number")
    return math.sqrt(x)


def _prim_vector(*args):
    return np.array([_need_real(a, "vector") for a in args], dtype=float)


def _prim_eq(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return bool(np.array_equal(np.asarray(a), np.asarray(b)))
    return bool(a == b)


DET_PRIMS = {
    "+": _prim_add,
    "-": _prim_sub,
    "*": _prim_mul,
    "/": _prim_div,
    "<=": _cmp("<=", lambda a, b: a <= b),
    "<": _cmp("<", lambda a, b: a < b),
    ">=": _cmp(">=", lambda a, b: a >= b),
    ">": _cmp(">", lambda a, b: a > b),
    "=": _prim_eq,
    "exp": _prim_exp,
    "log": _prim_log,
    "sqrt": _prim_sqrt,
    "vector": _prim_vector,
    "linear_logistic": linear_logistic,
}

DIST_NAMES = (
    "bernoulli",
    "normal",
    "gamma",
    "inv_gamma",
    "beta",
    "uniform_continuous",
    "uniform",
    "multivariate_normal",
)


# --- trace -----------------------------------------------------------------


class Trace:
    def __init__(self):
        self.nodes = {}
        self.next_id = 0
        self.env = Env()
        self.observed_nodes = set()
        self.predictions = {}
        self.scopes = {}
        self.global_version = 0
        self.stale_repairs = 0
        self.has_lazy_state = False
        self.directive_roots = []
        self._root_ids = set()
        self._bind_builtins()

    # -- construction helpers

    def _bind_builtins(self):
        for name, fn in DET_PRIMS.items():
            nid = self._new_node(
                KIND_CONSTANT, PrimitiveProc(name, fn), (), path=("builtin", name)
            )
            self.env.bind(name, nid)
            self._root_ids.add(nid)
        for name in DIST_NAMES:
            nid = self._new_node(
                KIND_CONSTANT, get_family(name), (), path=("builtin", name)
            )
            self.env.bind(name, nid)
            self._root_ids.add(nid)

    def _new_node(self, kind, value, parents, recipe=None, family=None, path=None,
                  ctx=None):
        nid = self.next_id
        self.next_id += 1
        node = Node(nid, kind, value, tuple(parents), recipe, family, path)
        node.version = self.bump_version()
        self.nodes[nid] = node
        for p in node.parents:
            parent = self.nodes[p]
            if ctx is not None:
                ctx.note_children_mutation(parent)
            parent.children.append(nid)
        if ctx is not None:
            if ctx.exist_stack:
                ep = ctx.exist_stack[-1]
                node.exist_parent = ep
                epn = self.nodes[ep]
                ctx.note_exist_mutation(epn)
                if epn.exist_children is None:
                    epn.exist_children = []
                epn.exist_children.append(nid)
            if ctx.capture is not None:
                ctx.capture.append(nid)
        return nid

    def bump_version(self):
        self.global_version += 1
        return self.global_version

    def node(self, nid):
        return self.nodes[nid]

    def stochastic_ids(self):
        return [n.nid for n in self.nodes.values() if n.kind == KIND_STOCH]

    # -- reads ---------------------------------------------------------------

    def read_value(self, nid):
        """Public read: repairs any stale deterministic ancestry first."""
        if self.has_lazy_state:
            self._freshen(nid, None)
        node = self.nodes[nid]
        if node.stale or (node.value is None and node.kind != KIND_CONSTANT):
            raise InternalError("read of detached node %d" % nid)
        return node.value

    def refresh_stale(self, nid, override=None):
        """Recompute the stale deterministic chain above nid; returns its value."""
        self._freshen(nid, override)
        return self._value_for(nid, override)

    def _value_for(self, nid, override):
        if override is not None:
            hit = override.get(nid)
            if hit is not None:
                return hit[0]
        return self.nodes[nid].value

    def _freshen(self, nid, override):
        """Bring nid up to date against its parents; returns its version."""
        if override is not None:
            hit = override.get(nid)
            if hit is not None:
                return hit[1]
        node = self.nodes[nid]
        if node.kind == KIND_CONSTANT:
            return node.version
        if node.stale:
            raise InternalError("refresh of detached node %d" % nid)
        pmax = 0
        for p in node.parents:
            pv = self._freshen(p, override)
            if pv > pmax:
                pmax = pv
        if pmax <= node.version:
            return node.version
        if node.kind == KIND_STOCH:
            # value is a sample, never stale; the cached density is
            params = [self._value_for(p, override) for p in node.parents[1:]]
            node.log_density = node.family.log_pdf(params, node.value)
        else:
            node.value = self._recompute_value(node, override)
        node.version = pmax
        self.stale_repairs += 1
        return node.version

    def _recompute_value(self, node, override=None):
        tag = node.recipe[0]
        if tag == "prim":
            fn = node.recipe[1]
            args = [self._value_for(p, override) for p in node.parents[1:]]
            return fn(*args)
        if tag == "if":
            # value tracks the taken branch; branch identity itself can only
            # change through regenerate, which handles the structural part
            return self._value_for(node.parents[1], override)
        if tag in ("scope", "app", "memlookup"):
            return self._value_for(node.parents[-1], override)
        raise InternalError("no recompute recipe for node %d" % node.nid)

    # -- density ---------------------------------------------------------------

    def log_density(self):
        """Joint log density of the current trace state (Markov factorization).

        Stale caches are repaired first; -inf is legal (zero-density
        observation), NaN is an internal error.
        """
        total = 0.0
        for node in self.nodes.values():
            if node.kind != KIND_STOCH:
                continue
            self._freshen(node.nid, None)
            ld = node.log_density
            if ld != ld:
                raise InternalError("NaN log density at node %d" % node.nid)
            total += ld
        return total

    # -- scope registry ---------------------------------------------------------

    def register_scope(self, scope, label, nid, ctx=None):
        table = self.scopes.setdefault(scope, {})
        if ctx is not None and ctx.fragment is not None:
            ctx.fragment.note_scope_write(scope, label, table.get(label))
        table[label] = nid

    def lookup_scope(self, scope, label):
        from austere.errors import UnknownLabel, UnknownScope

        table = self.scopes.get(scope)
        if table is None:
            raise UnknownScope("no scope named %r" % scope)
        if label not in table:
            raise UnknownLabel("scope %r has no label %r" % (scope, label))
        return table[label]

    def scope_labels(self, scope):
        from austere.errors import UnknownScope

        table = self.scopes.get(scope)
        if table is None:
            raise UnknownScope("no scope named %r" % scope)
        return sorted(table.keys(), key=lambda x: (str(type(x)), x))

    def principal_for(self, scope, label):
        """Resolve a scope label to its stochastic source node, or None if the
        labeled value is not stochastic (constant branches)."""
        nid = self.lookup_scope(scope, label)
        return self.passthrough_source(nid)

    def passthrough_source(self, nid):
        node = self.nodes[nid]
        while True:
            if node.kind == KIND_STOCH:
                return node.nid
            if node.kind == KIND_LOOKUP:
                node = self.nodes[node.parents[-1]]
                continue
            if node.kind == KIND_DET and node.recipe[0] == "scope":
                node = self.nodes[node.parents[-1]]
                continue
            if node.kind == KIND_DET and node.recipe[0] == "if":
                node = self.nodes[node.parents[1]]
                continue
            return None


# --- evaluation --------------------------------------------------------------


class EvalCtx:
    """Carries the RNG, the existential-context stack, and (during
    regeneration) the fragment that must journal every structural mutation."""

    __slots__ = ("trace", "rng", "exist_stack", "capture", "fragment")

    def __init__(self, trace, rng, exist_stack=None, capture=None, fragment=None):
        self.trace = trace
        self.rng = rng
        self.exist_stack = exist_stack if exist_stack is not None else []
        self.capture = capture
        self.fragment = fragment

    def note_children_mutation(self, node):
        if self.fragment is not None:
            self.fragment.note_children(node)

    def note_exist_mutation(self, node):
        if self.fragment is not None:
            self.fragment.note_exist_children(node)


def eval_expression(trace, expr, env, ctx, path=("e",)):
    """Evaluate one expression, growing the trace; returns the result NodeId."""
    if isinstance(expr, Constant):
        return trace._new_node(KIND_CONSTANT, expr.value, (), path=path, ctx=ctx)
    if isinstance(expr, Symbol):
        return env.lookup(expr.name)
    if isinstance(expr, Placeholder):
        raise EvalError("undesugared placeholder {%s}" % expr.name)
    if isinstance(expr, Lambda):
        proc = CompoundProcedure(expr.params, expr.body, env)
        return trace._new_node(KIND_CONSTANT, proc, (), path=path, ctx=ctx)
    if isinstance(expr, If):
        pred_nid = eval_expression(trace, expr.predicate, env, ctx, path + ("p",))
        pred_val = trace.nodes[pred_nid].value
        if not isinstance(pred_val, bool):
            raise EvalError("if predicate must be boolean, got %r" % (pred_val,))
        taken = expr.consequent if pred_val else expr.alternative
        branch_tag = "t" if pred_val else "f"
        ctx.exist_stack.append(pred_nid)
        try:
            branch_nid = eval_expression(trace, taken, env, ctx, path + (branch_tag,))
        finally:
            ctx.exist_stack.pop()
        value = trace.nodes[branch_nid].value
        return trace._new_node(
            KIND_DET,
            value,
            (pred_nid, branch_nid),
            recipe=("if", expr.consequent, expr.alternative, env),
            path=path,
            ctx=ctx,
        )
    if isinstance(expr, Combination):
        op = expr.operator
        if isinstance(op, Symbol) and op.name == "mem":
            proc_nid = eval_expression(trace, expr.operands[0], env, ctx, path + (0,))
            proc = trace.nodes[proc_nid].value
            if not isinstance(proc, CompoundProcedure):
                raise EvalError("mem expects a compound procedure")
            return trace._new_node(
                KIND_DET,
                MemProcedure(proc_nid),
                (proc_nid,),
                recipe=("mem",),
                path=path,
                ctx=ctx,
            )
        if isinstance(op, Symbol) and op.name == "scope_include":
            scope = expr.operands[0].value
            label_nid = eval_expression(trace, expr.operands[1], env, ctx, path + (1,))
            label = trace.nodes[label_nid].value
            if isinstance(label, np.ndarray):
                raise EvalError("scope label must be a scalar")
            body_nid = eval_expression(trace, expr.operands[2], env, ctx, path + (2,))
            value = trace.nodes[body_nid].value
            nid = trace._new_node(
                KIND_DET,
                value,
                (label_nid, body_nid),
                recipe=("scope", scope),
                path=path,
                ctx=ctx,
            )
            trace.register_scope(scope, label, body_nid, ctx=ctx)
            return nid
        op_nid = eval_expression(trace, op, env, ctx, path + ("op",))
        op_val = trace.nodes[op_nid].value
        arg_nids = [
            eval_expression(trace, operand, env, ctx, path + (i,))
            for i, operand in enumerate(expr.operands)
        ]
        return apply_procedure(trace, op_nid, op_val, arg_nids, ctx, path)
    raise EvalError("cannot evaluate %r" % (expr,))


def apply_procedure(trace, op_nid, op_val, arg_nids, ctx, path):
    args = [trace.nodes[a].value for a in arg_nids]
    if isinstance(op_val, PrimitiveProc):
        try:
            value = op_val.fn(*args)
        except TypeError as exc:
            raise EvalError("bad arguments to %s: %s" % (op_val.name, exc)) from None
        return trace._new_node(
            KIND_DET,
            value,
            (op_nid,) + tuple(arg_nids),
            recipe=("prim", op_val.fn),
            path=path,
            ctx=ctx,
        )
    if isinstance(op_val, Distribution):
        op_val.validate_params(args)
        value = op_val.sample(args, ctx.rng)
        nid = trace._new_node(
            KIND_STOCH,
            value,
            (op_nid,) + tuple(arg_nids),
            family=op_val,
            path=path,
            ctx=ctx,
        )
        node = trace.nodes[nid]
        node.log_density = op_val.log_pdf(args, value)
        return nid
    if isinstance(op_val, CompoundProcedure):
        if len(arg_nids) != len(op_val.params):
            raise EvalError(
                "procedure expects %d arguments, got %d"
                % (len(op_val.params), len(arg_nids))
            )
        frame = Env(op_val.env, dict(zip(op_val.params, arg_nids)))
        body_nid = eval_expression(trace, op_val.body, frame, ctx, path + ("body",))
        value = trace.nodes[body_nid].value
        return trace._new_node(
            KIND_LOOKUP,
            value,
            (op_nid, body_nid),
            recipe=("app",),
            path=path,
            ctx=ctx,
        )
    if isinstance(op_val, MemProcedure):
        key = _memo_key(args)
        root = op_val.table.get(key)
        if root is None:
            proc = trace.nodes[op_val.proc_nid].value
            if len(arg_nids) != len(proc.params):
                raise EvalError(
                    "memoized procedure expects %d arguments, got %d"
                    % (len(proc.params), len(arg_nids))
                )
            # existence of the family is decided by the key values; the last
            # argument node stands in as the recorded determiner
            if arg_nids:
                ctx.exist_stack.append(arg_nids[-1])
            frame = Env(proc.env, dict(zip(proc.params, arg_nids)))
            try:
                root = eval_expression(
                    trace, proc.body, frame, ctx, path + ("family",) + key
                )
            finally:
                if arg_nids:
                    ctx.exist_stack.pop()
            if ctx.fragment is not None:
                ctx.fragment.note_memo_write(op_val, key, None)
            op_val.table[key] = root
        value = trace.nodes[root].value
        return trace._new_node(
            KIND_LOOKUP,
            value,
            (op_nid,) + tuple(arg_nids) + (root,),
            recipe=("memlookup", key),
            path=path,
            ctx=ctx,
        )
    raise EvalError("not a procedure: %r" % (op_val,))


def _memo_key(args):
    parts = []
    for a in args:
        if isinstance(a, np.ndarray):
            parts.append(tuple(float(x) for x in a))
        elif isinstance(a, (bool, float, str)):
            parts.append(a)
        else:
            raise EvalError("unsupported memo key component %r" % (a,))
    return tuple(parts)


# --- directive execution ----------------------------------------------------


def eval_directive(trace, directive, rng, index=0):
    """Execute one assume/observe/predict directive against the trace."""
    ctx = EvalCtx(trace, rng)
    if isinstance(directive, Assume):
        if directive.name in trace.env.table:
            raise EvalError("name %r is already assumed" % directive.name)
        nid = eval_expression(trace, directive.expression, trace.env, ctx, (index,))
        trace.env.bind(directive.name, nid)
        trace.directive_roots.append(nid)
        return nid
    if isinstance(directive, Observe):
        nid = eval_expression(trace, directive.expression, trace.env, ctx, (index,))
        if isinstance(directive.value, Placeholder):
            raise EvalError("undesugared observe value")
        _force_observation(trace, nid, directive.value.value)
        trace.directive_roots.append(nid)
        return nid
    if isinstance(directive, Predict):
        nid = eval_expression(trace, directive.expression, trace.env, ctx, (index,))
        if directive.label in trace.predictions:
            raise EvalError("duplicate predict label %r" % directive.label)
        trace.predictions[directive.label] = nid
        trace.directive_roots.append(nid)
        return nid
    raise EvalError("cannot execute directive %r" % (directive,))


def execute_program(directives, rng, trace=None):
    """Run assume/observe/predict directives; returns (trace, infer list)."""
    if trace is None:
        trace = Trace()
    infers = []
    for i, d in enumerate(directives):
        if isinstance(d, Infer):
            infers.append(d.expression)
        else:
            eval_directive(trace, d, rng, index=i)
    return trace, infers


def _force_observation(trace, nid, value):
    target_id = trace.passthrough_source(nid)
    if target_id is None:
        raise SupportError("observe requires a stochastic output, got a deterministic one")
    target = trace.nodes[target_id]
    if target.observed:
        raise EvalError("node %d is already observed" % target_id)
    params = [trace.nodes[p].value for p in target.parents[1:]]
    value = _coerce_observed(value)
    if not target.family.in_support(params, value):
        raise SupportError(
            "observed value %r is outside the support of %s" % (value, target.family.name)
        )
    target.value = value
    target.log_density = target.family.log_pdf(params, value)
    target.version = trace.bump_version()
    target.observed = True
    trace.observed_nodes.add(target_id)
    _propagate_forced_value(trace, target)


def _coerce_observed(value):
    if isinstance(value, (bool, str)):
        return value
    if isinstance(value, numbers.Real):
        return float(value)
    if isinstance(value, np.ndarray):
        return np.asarray(value, dtype=float)
    if isinstance(value, list):
        return value
    raise SupportError("unsupported observed value %r" % (value,))


def _propagate_forced_value(trace, source):
    """Eagerly push a forced value through deterministic descendants.

    Forcing happens at observe time, before any inference, so downstream
    consumers evaluated earlier must be brought back in line. Branch
    predicates are required to be unaffected: a forced value that would
    change trace structure is rejected.
    """
    frontier = [source.nid]
    seen = set()
    order = []
    while frontier:
        nid = frontier.pop()
        for c in trace.nodes[nid].children:
            if c in seen:
                continue
            seen.add(c)
            child = trace.nodes[c]
            if child.kind == KIND_STOCH:
                order.append(c)
                continue
            order.append(c)
            frontier.append(c)
    for nid in sorted(order):
        node = trace.nodes[nid]
        if node.exist_children:
            raise SupportError(
                "observation would change trace structure at node %d" % nid
            )
        if node.kind == KIND_STOCH:
            params = [trace.nodes[p].value for p in node.parents[1:]]
            node.log_density = node.family.log_pdf(params, node.value)
        else:
            if node.recipe[0] == "if":
                pred = trace.nodes[node.parents[0]]
                if pred.nid in seen or pred.nid == source.nid:
                    raise SupportError(
                        "observation would change trace structure at node %d" % nid
                    )
            node.value = trace._recompute_value(node)
        node.version = trace.bump_version()


# --- fragments: detach / regenerate / restore --------------------------------


class _Snapshot:
    __slots__ = ("value", "log_density", "version", "stale", "parents")

    def __init__(self, node):
        self.value = node.value
        self.log_density = node.log_density
        self.version = node.version
        self.stale = node.stale
        self.parents = node.parents


class Fragment:
    """Restore journal for one detach/regenerate round trip.

    Holds the pre-proposal snapshots of every touched node, the removed
    transient nodes (whole objects, unlinked but unmutated), and snapshots of
    every adjacency list the round trip mutates, so restore() is bit-exact.
    """

    __slots__ = (
        "trace",
        "principal",
        "det_order",
        "trans_order",
        "absorbing",
        "snapshots",
        "removed",
        "children_saves",
        "exist_saves",
        "memo_saves",
        "scope_saves",
        "created",
        "state",
        "aborted",
        "proposal",
        "d_set",
    )

    def __init__(self, trace, principal, det_order, trans_order, absorbing, d_set):
        self.trace = trace
        self.principal = principal
        self.det_order = det_order  # D in ascending id order, principal first
        self.trans_order = trans_order  # T in ascending id order
        self.absorbing = absorbing
        self.snapshots = {}
        self.removed = []  # (nid, Node) in removal order
        self.children_saves = {}
        self.exist_saves = {}
        self.memo_saves = []
        self.scope_saves = []
        self.created = []
        self.state = "built"
        self.aborted = False
        self.proposal = None
        self.d_set = d_set

    # journaling hooks

    def note_children(self, node):
        if node.nid not in self.children_saves:
            self.children_saves[node.nid] = list(node.children)

    def note_exist_children(self, node):
        if node.nid not in self.exist_saves:
            self.exist_saves[node.nid] = (
                list(node.exist_children) if node.exist_children is not None else None
            )

    def note_memo_write(self, memproc, key, old_root):
        self.memo_saves.append((memproc, key, old_root))

    def note_scope_write(self, scope, label, old_nid):
        self.scope_saves.append((scope, label, old_nid))

    def snapshot(self, node):
        if node.nid not in self.snapshots:
            self.snapshots[node.nid] = _Snapshot(node)

    def size(self):
        return len(self.det_order) + len(self.trans_order) + len(self.absorbing)


def _suspend_node(trace, fragment, node):
    """Unlink a transient node from the trace, journaling every edge list."""
    nid = node.nid
    for p in node.parents:
        parent = trace.nodes.get(p)
        if parent is None:
            continue  # parent already unlinked in this pass
        fragment.note_children(parent)
        parent.children.remove(nid)
    ep = node.exist_parent
    if ep is not None:
        parent = trace.nodes.get(ep)
        if parent is not None:
            fragment.note_exist_children(parent)
            parent.exist_children.remove(nid)
    fragment.removed.append((nid, node))
    del trace.nodes[nid]


def _scrub_memo_entries(trace, fragment, removed_ids):
    """Remove memo-table and scope entries that point into removed nodes."""
    for node in trace.nodes.values():
        if node.kind == KIND_DET and node.recipe is not None and node.recipe[0] == "mem":
            mem = node.value
            dead = [k for k, v in mem.table.items() if v in removed_ids]
            for k in dead:
                fragment.note_memo_write(mem, k, mem.table[k])
                del mem.table[k]
    for scope, table in trace.scopes.items():
        dead = [label for label, v in table.items() if v in removed_ids]
        for label in dead:
            fragment.note_scope_write(scope, label, table[label])
            del table[label]


def detach_fragment(trace, fragment, proposal):
    """Unset the fragment and collect the current-state log weights.

    Absorbing children contribute -log p(x | current parents) from their
    (fresh) caches without being unset; transient stochastic nodes contribute
    log q - log p which cancels exactly under prior resimulation of
    transients; the principal contributes -log p under non-prior proposals
    (symmetric q-terms are coded as zeros, prior q cancels its own p).
    """
    if fragment.state != "built":
        raise InternalError("detach on a fragment in state %r" % fragment.state)
    fragment.proposal = proposal
    if trace.has_lazy_state:
        # caches must reflect the current state before they are buffered
        for nid in fragment.absorbing:
            trace._freshen(nid, None)
        for nid in fragment.det_order:
            trace._freshen(nid, None)
    log_w = 0.0
    for nid in fragment.absorbing:
        node = trace.nodes[nid]
        fragment.snapshot(node)
        log_w -= node.log_density
    # transients leave the trace entirely, newest first
    removed_ids = set()
    for nid in reversed(fragment.trans_order):
        node = trace.nodes[nid]
        fragment.snapshot(node)
        removed_ids.add(nid)
    for nid in reversed(fragment.trans_order):
        _suspend_node(trace, fragment, trace.nodes[nid])
        # prior-resimulated transients: log q(old|current) - log p(old|parents)
        # is exactly zero, so nothing is accumulated here
    if removed_ids:
        _scrub_memo_entries(trace, fragment, removed_ids)
    for nid in reversed(fragment.det_order):
        node = trace.nodes[nid]
        fragment.snapshot(node)
        if nid == fragment.principal:
            if proposal.kind != "prior":
                log_w -= node.log_density
            node.log_density = None
        node.value = None
        node.stale = True
    fragment.state = "detached"
    return log_w


def regenerate_fragment(trace, fragment, proposal, rng, forced_value=None):
    """Rebuild the fragment under `proposal`, collecting proposed-state weights.

    forced_value short-circuits the proposal draw (used by the reversibility
    tests and the fixed-pair benchmark protocol). Returns -inf (with the
    fragment marked aborted) when the proposed principal has zero prior
    density, leaving restore() as the only legal next step.
    """
    if fragment.state != "detached":
        raise InternalError("regenerate on a fragment in state %r" % fragment.state)
    version = trace.bump_version()
    log_w = 0.0
    principal = fragment.principal
    pnode = trace.nodes[principal]
    if trace.has_lazy_state:
        for p in pnode.parents[1:]:
            trace._freshen(p, None)
    params = [trace.nodes[p].value for p in pnode.parents[1:]]
    old_value = fragment.snapshots[principal].value
    if forced_value is not None:
        new_value = forced_value
    elif proposal.kind == "prior":
        new_value = pnode.family.sample(params, rng)
    elif proposal.kind == "drift":
        new_value = _drift_step(old_value, proposal.width, rng)
    elif proposal.kind == "fixed":
        new_value = proposal.value
    else:
        raise InternalError("unknown proposal kind %r" % proposal.kind)
    new_density = pnode.family.log_pdf(params, new_value)
    pnode.value = new_value
    pnode.log_density = new_density
    pnode.stale = False
    pnode.version = version
    if proposal.kind != "prior":
        log_w += new_density
    if new_density == -math.inf:
        fragment.aborted = True
        fragment.state = "regenerated"
        return -math.inf
    ctx = EvalCtx(trace, rng, capture=fragment.created, fragment=fragment)
    merged = sorted(set(fragment.det_order[1:]) | set(fragment.absorbing))
    d_set = fragment.d_set
    lazy = trace.has_lazy_state
    try:
        for nid in merged:
            node = trace.nodes[nid]
            if lazy:
                # parents outside the scaffold may hold values left behind by
                # an earlier lazily-committed transition
                for p in node.parents:
                    if p not in d_set:
                        trace._freshen(p, None)
            if nid in d_set:
                if node.recipe[0] == "if" and node.parents[0] in d_set:
                    _reeval_branch(trace, fragment, node, ctx)
                else:
                    node.value = trace._recompute_value(node)
                node.stale = False
                node.version = version
            else:
                node_params = [trace.nodes[p].value for p in node.parents[1:]]
                ld = node.family.log_pdf(node_params, node.value)
                node.log_density = ld
                node.version = version
                log_w += ld
    except (DomainError, DimensionMismatch):
        # a proposed value outside the deterministic domain (sqrt of a
        # negative, say) has zero posterior density: certain rejection
        fragment.aborted = True
        fragment.state = "regenerated"
        return -math.inf
    fragment.state = "regenerated"
    return log_w


def _drift_step(old_value, width, rng):
    if isinstance(old_value, bool):
        raise DomainError("drift proposals need a real or vector principal")
    if isinstance(old_value, np.ndarray):
        return old_value + width * rng.standard_normal(old_value.shape[0])
    if not isinstance(old_value, numbers.Real):
        raise DomainError("drift proposals need a real or vector principal")
    return float(old_value) + width * rng.standard_normal()


def _reeval_branch(trace, fragment, node, ctx):
    """Re-select an if node whose predicate is part of the proposal."""
    pred_nid = node.parents[0]
    pred_val = trace.nodes[pred_nid].value
    if not isinstance(pred_val, bool):
        raise EvalError("if predicate must be boolean, got %r" % (pred_val,))
    consequent, alternative, env = node.recipe[1], node.recipe[2], node.recipe[3]
    taken = consequent if pred_val else alternative
    ctx.exist_stack.append(pred_nid)
    try:
        branch_nid = eval_expression(trace, taken, env, ctx, path=node.path)
    finally:
        ctx.exist_stack.pop()
    # a branch that names a pre-existing node (plain symbol) leaves the old
    # root alive; drop its edge to this consumer explicitly. Roots that were
    # transients are already gone.
    old_root = trace.nodes.get(node.parents[1])
    if old_root is not None:
        fragment.note_children(old_root)
        old_root.children.remove(node.nid)
    node.parents = (pred_nid, branch_nid)
    branch = trace.nodes[branch_nid]
    fragment.note_children(branch)
    branch.children.append(node.nid)
    node.value = branch.value
    return branch_nid


def restore_fragment(trace, fragment):
    """Put the trace back exactly as it was before detach/regenerate."""
    if fragment.state not in ("detached", "regenerated"):
        raise InternalError("restore on a fragment in state %r" % fragment.state)
    # drop everything created during regeneration, newest first
    for nid in sorted(fragment.created, reverse=True):
        trace.nodes.pop(nid, None)
    # put removed transients back first so the adjacency rewind below can
    # reach them; the saved lists are the pre-transition originals
    for nid, node in reversed(fragment.removed):
        trace.nodes[nid] = node
    for nid, children in fragment.children_saves.items():
        node = trace.nodes.get(nid)
        if node is not None:
            node.children = children
    for nid, exist_children in fragment.exist_saves.items():
        node = trace.nodes.get(nid)
        if node is not None:
            node.exist_children = exist_children
    # memo/scope entries, newest write undone first
    for mem, key, old_root in reversed(fragment.memo_saves):
        if old_root is None:
            mem.table.pop(key, None)
        else:
            mem.table[key] = old_root
    for scope, label, old_nid in reversed(fragment.scope_saves):
        table = trace.scopes.setdefault(scope, {})
        if old_nid is None:
            table.pop(label, None)
        else:
            table[label] = old_nid
    for nid, snap in fragment.snapshots.items():
        node = trace.nodes.get(nid)
        if node is None:
            raise InternalError("snapshot for a vanished node %d" % nid)
        node.value = snap.value
        node.log_density = snap.log_density
        node.version = snap.version
        node.stale = snap.stale
        node.parents = snap.parents
    fragment.state = "restored"


def commit_fragment(trace, fragment):
    """Accept the regenerated state; the journal is consumed."""
    if fragment.state != "regenerated":
        raise InternalError("commit on a fragment in state %r" % fragment.state)
    if fragment.aborted:
        raise InternalError("commit of an aborted regeneration")
    fragment.state = "committed"


def detach_section(trace, fragment, override):
    """Collect the current-state weight of one local section and unset it.

    The override map carries the pre-proposal values of the already
    regenerated global chain, so stale caches here are repaired against the
    state the current trace density actually refers to, never against the
    still-unaccepted proposal.
    """
    if fragment.state != "built":
        raise InternalError("section detach on a fragment in state %r" % fragment.state)
    for nid in fragment.det_order:
        trace._freshen(nid, override)
    log_w = 0.0
    for nid in fragment.absorbing:
        trace._freshen(nid, override)
        node = trace.nodes[nid]
        fragment.snapshot(node)
        log_w -= node.log_density
    for nid in reversed(fragment.det_order):
        node = trace.nodes[nid]
        fragment.snapshot(node)
        node.value = None
        node.stale = True
    fragment.state = "detached"
    return log_w


def regenerate_section(trace, fragment):
    """Rebuild one local section against the regenerated global chain."""
    if fragment.state != "detached":
        raise InternalError(
            "section regenerate on a fragment in state %r" % fragment.state
        )
    version = trace.bump_version()
    log_w = 0.0
    d_set = fragment.d_set
    lazy = trace.has_lazy_state
    merged = sorted(d_set | set(fragment.absorbing))
    for nid in merged:
        node = trace.nodes[nid]
        if lazy:
            for p in node.parents:
                if p not in d_set:
                    trace._freshen(p, None)
        if nid in d_set:
            node.value = trace._recompute_value(node)
            node.stale = False
        else:
            params = [trace.nodes[p].value for p in node.parents[1:]]
            ld = node.family.log_pdf(params, node.value)
            node.log_density = ld
            log_w += ld
        node.version = version
    fragment.state = "regenerated"
    return log_w


# --- structural hash / clone / dump ------------------------------------------


def _value_bytes(value):
    if value is None:
        return b"none"
    if isinstance(value, bool):
        return b"b1" if value else b"b0"
    if isinstance(value, float):
        return b"f" + struct.pack("<d", value)
    if isinstance(value, str):
        return b"s" + value.encode()
    if isinstance(value, np.ndarray):
        return b"v" + np.asarray(value, dtype=float).tobytes()
    if isinstance(value, (PrimitiveProc, Distribution)):
        return b"p" + getattr(value, "name", "?").encode()
    if isinstance(value, CompoundProcedure):
        return b"proc" + ",".join(value.params).encode()
    if isinstance(value, MemProcedure):
        items = sorted(value.table.items(), key=lambda kv: repr(kv[0]))
        return b"mem" + repr(items).encode()
    if isinstance(value, list):
        return b"l" + repr(value).encode()
    return repr(value).encode()


def structural_hash(trace):
    """Bit-exact digest of the live trace state (values, densities, versions,
    edges, observations)."""
    h = hashlib.sha256()
    for nid in sorted(trace.nodes):
        node = trace.nodes[nid]
        h.update(struct.pack("<qi", nid, node.kind))
        h.update(_value_bytes(node.value))
        ld = node.log_density
        h.update(b"nold" if ld is None else struct.pack("<d", ld))
        h.update(struct.pack("<q", node.version))
        h.update(b"1" if node.observed else b"0")
        h.update(b"1" if node.stale else b"0")
        h.update(struct.pack("<%dq" % len(node.parents), *node.parents))
        ep = node.exist_parent
        h.update(struct.pack("<q", -1 if ep is None else ep))
    return h.hexdigest()


def dump_trace(trace):
    """Stable plain-text dump: one line per node."""
    lines = []
    for nid in sorted(trace.nodes):
        node = trace.nodes[nid]
        value = node.value
        if isinstance(value, float):
            vtext = repr(value)
        elif isinstance(value, np.ndarray):
            vtext = "[" + " ".join(repr(float(v)) for v in value) + "]"
        else:
            vtext = repr(value)
        ld = "" if node.log_density is None else " logp=%r" % node.log_density
        obs = " obs" if node.observed else ""
        ep = "" if node.exist_parent is None else " exist=%d" % node.exist_parent
        lines.append(
            "%d %s value=%s parents=%s%s%s%s"
            % (nid, KIND_NAMES[node.kind], vtext, list(node.parents), ep, ld, obs)
        )
    return "\n".join(lines) + "\n"


def clone_trace(trace):
    """Independent deep copy sharing only immutable AST and family objects."""
    new = Trace.__new__(Trace)
    new.next_id = trace.next_id
    new.observed_nodes = set(trace.observed_nodes)
    new.predictions = dict(trace.predictions)
    new.scopes = {k: dict(v) for k, v in trace.scopes.items()}
    new.global_version = trace.global_version
    new.stale_repairs = trace.stale_repairs
    new.has_lazy_state = trace.has_lazy_state
    new.directive_roots = list(trace.directive_roots)
    new._root_ids = set(trace._root_ids)
    env_memo = {}
    new.env = _clone_env(trace.env, env_memo)
    new.nodes = {}
    mem_memo = {}
    for nid, node in trace.nodes.items():
        c = Node.__new__(Node)
        c.nid = node.nid
        c.kind = node.kind
        c.value = _clone_value(node.value, env_memo, mem_memo)
        c.parents = node.parents
        c.children = list(node.children)
        c.exist_parent = node.exist_parent
        c.exist_children = (
            list(node.exist_children) if node.exist_children is not None else None
        )
        c.log_density = node.log_density
        c.version = node.version
        c.stale = node.stale
        c.observed = node.observed
        c.family = node.family
        c.recipe = _clone_recipe(node.recipe, env_memo)
        c.path = node.path
        new.nodes[nid] = c
    return new


def _clone_env(env, memo):
    if env is None:
        return None
    hit = memo.get(id(env))
    if hit is not None:
        return hit
    c = Env(None, dict(env.table))
    memo[id(env)] = c
    c.parent = _clone_env(env.parent, memo)
    return c


def _clone_value(value, env_memo, mem_memo):
    if isinstance(value, CompoundProcedure):
        return CompoundProcedure(value.params, value.body, _clone_env(value.env, env_memo))
    if isinstance(value, MemProcedure):
        hit = mem_memo.get(id(value))
        if hit is not None:
            return hit
        c = MemProcedure(value.proc_nid)
        c.table = dict(value.table)
        mem_memo[id(value)] = c
        return c
    if isinstance(value, np.ndarray):
        return value.copy()
    return value


def _clone_recipe(recipe, env_memo):
    if recipe is None:
        return None
    if recipe[0] == "if":
        return ("if", recipe[1], recipe[2], _clone_env(recipe[3], env_memo))
    return recipe


def wall_ns():
    return time.perf_counter_ns()
