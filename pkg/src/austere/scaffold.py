"""Scaffold construction: which nodes a proposal at one principal touches.

The target set D holds the principal and every node whose value is a
deterministic function of it. The transient set T holds nodes whose very
existence hangs on a value in D or T (if branches taken under a predicate
being resampled, memoized families keyed by a changing argument). The
absorbing set A holds the stochastic children of D that stay put and absorb
the change through their densities.

The subsampled kernel additionally splits a scaffold at its border: the first
descendant (possibly the principal itself) with two or more distinct scaffold
children. The chain from principal to border is the global section; each
border child starts one local section. Sections must tile the rest of the
scaffold disjointly or the transition falls back to the exact kernel.
"""

from austere.errors import InternalError, StructureChangeError
from austere.trace import KIND_DET, KIND_LOOKUP, KIND_STOCH, Fragment


def construct_scaffold(trace, principal):
    """Build the detachable fragment rooted at an unobserved stochastic node."""
    pnode = trace.nodes[principal]
    if pnode.kind != KIND_STOCH:
        raise InternalError("principal %d is not stochastic" % principal)
    if pnode.observed:
        raise InternalError("principal %d is observed" % principal)
    d_set = {principal}
    a_set = set()
    queue = [principal]
    while queue:
        nid = queue.pop()
        for c in trace.nodes[nid].children:
            if c in d_set:
                continue
            child = trace.nodes[c]
            if child.kind == KIND_STOCH:
                a_set.add(c)
                continue
            _check_propagation_role(child, nid)
            d_set.add(c)
            queue.append(c)
    t_set = set()
    frontier = list(d_set)
    while frontier:
        nid = frontier.pop()
        ec = trace.nodes[nid].exist_children
        if not ec:
            continue
        for e in ec:
            if e not in t_set:
                t_set.add(e)
                frontier.append(e)
    if principal in t_set:
        raise StructureChangeError(
            "the existence of principal %d depends on its own value" % principal
        )
    # existential dependence dominates value dependence: a node that would be
    # removed with its branch is transient no matter what else reads it
    d_set -= t_set
    a_set -= t_set
    for t in t_set:
        for c in trace.nodes[t].children:
            if c not in d_set and c not in t_set:
                raise StructureChangeError(
                    "node %d outside the scaffold reads transient node %d" % (c, t)
                )
    det_order = sorted(d_set)
    if det_order[0] != principal:
        raise InternalError("principal is not the oldest target node")
    return Fragment(
        trace, principal, det_order, sorted(t_set), sorted(a_set), d_set
    )


def _check_propagation_role(child, via):
    """A value change may only flow through value-recomputable slots."""
    if child.kind == KIND_LOOKUP:
        if child.recipe[0] == "memlookup" and via != child.parents[-1]:
            raise StructureChangeError(
                "memoized application %d would change its key" % child.nid
            )
        return
    if child.kind == KIND_DET:
        tag = child.recipe[0]
        if tag == "scope" and via == child.parents[0] and via != child.parents[1]:
            raise StructureChangeError(
                "scope label at node %d would change" % child.nid
            )
        if tag == "mem":
            raise StructureChangeError(
                "memoized procedure at node %d would change" % child.nid
            )


def _chain_walk(trace, scaffold):
    """Walk single-child target-set chains down from the principal. Returns
    (last chain node, chain)."""
    d_set = scaffold.d_set
    chain = [scaffold.principal]
    while True:
        node = trace.nodes[chain[-1]]
        distinct = list(dict.fromkeys(node.children))
        if len(distinct) == 1 and distinct[0] in d_set:
            chain.append(distinct[0])
            continue
        return chain[-1], chain


def find_border(trace, principal, scaffold=None):
    """First descendant of the principal (or the principal itself) with two or
    more distinct scaffold children, following the single-child chain.

    Returns (border, child_count) or None when the chain dead-ends before any
    node fans out, in which case there is nothing to subsample.
    """
    if scaffold is None:
        scaffold = construct_scaffold(trace, principal)
    border, _chain = _chain_walk(trace, scaffold)
    members = scaffold.d_set | set(scaffold.absorbing) | set(scaffold.trans_order)
    kids = [c for c in dict.fromkeys(trace.nodes[border].children) if c in members]
    if len(kids) < 2:
        return None
    return border, len(kids)


def construct_global_section(trace, principal, border, scaffold=None):
    """The scaffold chain from the principal down to the border, untouched
    below it."""
    if scaffold is None:
        scaffold = construct_scaffold(trace, principal)
    walked, chain = _chain_walk(trace, scaffold)
    if walked != border:
        raise InternalError(
            "node %d is not the border of principal %d" % (border, principal)
        )
    for nid in chain:
        if trace.nodes[nid].exist_children:
            raise StructureChangeError(
                "global section node %d controls existence of other nodes" % nid
            )
    return Fragment(trace, principal, list(chain), [], [], set(chain))


def construct_local_section(trace, border, index, scaffold):
    """Section `index` of the border's fan-out, in child creation order."""
    d_set = scaffold.d_set
    a_set = set(scaffold.absorbing)
    roots = [
        c
        for c in dict.fromkeys(trace.nodes[border].children)
        if c in d_set or c in a_set
    ]
    if index >= len(roots):
        raise InternalError(
            "border %d has %d sections, asked for %d" % (border, len(roots), index)
        )
    section, _members = _section_from_root(trace, roots[index], d_set, a_set)
    if section is None:
        raise StructureChangeError(
            "section at child %d does not tile cleanly" % roots[index]
        )
    return section


def _section_from_root(trace, root, d_set, a_set):
    """Collect one local section. Returns (Fragment, members) or (None, reason)
    when the walk leaves the scaffold."""
    if root in a_set:
        return (
            Fragment(trace, None, [], [], [root], set()),
            [root],
        )
    if root not in d_set:
        return None, "border child outside the scaffold"
    d_local = [root]
    a_local = []
    members = [root]
    stack = [root]
    seen = {root}
    while stack:
        nid = stack.pop()
        for c in trace.nodes[nid].children:
            if c in seen:
                continue
            seen.add(c)
            if c in a_set:
                a_local.append(c)
                members.append(c)
            elif c in d_set:
                d_local.append(c)
                members.append(c)
                stack.append(c)
            else:
                return None, "section escapes the scaffold"
    frag = Fragment(
        trace, None, sorted(d_local), [], sorted(a_local), set(d_local)
    )
    return frag, members


class SubsamplePlan:
    """Border split of a scaffold, or the reason there is none."""

    __slots__ = ("ok", "reason", "border", "chain", "global_fragment", "sections")

    def __init__(self, ok, reason, border=None, chain=None, global_fragment=None,
                 sections=None):
        self.ok = ok
        self.reason = reason
        self.border = border
        self.chain = chain
        self.global_fragment = global_fragment
        self.sections = sections if sections is not None else []

    @property
    def section_count(self):
        return len(self.sections)


def plan_subsampled(trace, scaffold, batch_size):
    """Split a scaffold into a global section plus independent local sections.

    Any shape the split cannot express honestly (transients, re-evaluating
    branches, overlapping sections, too few sections) reports not-ok and the
    caller runs the exact kernel instead.
    """
    if scaffold.trans_order:
        return SubsamplePlan(False, "transient nodes present")
    d_set = scaffold.d_set
    a_set = set(scaffold.absorbing)
    for nid in scaffold.det_order:
        node = trace.nodes[nid]
        if (
            node.kind == KIND_DET
            and node.recipe[0] == "if"
            and node.parents[0] in d_set
        ):
            return SubsamplePlan(False, "branch selection depends on the proposal")
    border, chain = _chain_walk(trace, scaffold)
    chain_set = set(chain)
    roots = [
        c for c in dict.fromkeys(trace.nodes[border].children) if c not in chain_set
    ]
    sections = []
    claimed = {}
    for root in roots:
        frag, members = _section_from_root(trace, root, d_set, a_set)
        if frag is None:
            return SubsamplePlan(False, members)
        for nid in members:
            if nid in claimed:
                return SubsamplePlan(False, "local sections overlap")
            claimed[nid] = root
        sections.append(frag)
    leftover = (d_set | a_set) - chain_set - set(claimed)
    if leftover:
        return SubsamplePlan(False, "scaffold members outside every section")
    if len(sections) < 2 * batch_size:
        return SubsamplePlan(
            False, "too few local sections", border, chain, None, sections
        )
    global_fragment = Fragment(
        trace, scaffold.principal, list(chain), [], [], chain_set
    )
    return SubsamplePlan(True, "", border, chain, global_fragment, sections)


def partition_dump(trace, scaffold, plan=None):
    """Stable text dump of scaffold membership, one line per involved node."""
    tags = {}
    for nid in scaffold.det_order:
        tags[nid] = "D"
    for nid in scaffold.trans_order:
        tags[nid] = "T"
    for nid in scaffold.absorbing:
        tags[nid] = "A"
    if plan is not None and plan.ok:
        for nid in plan.chain:
            tags[nid] = "global"
        for i, section in enumerate(plan.sections):
            for nid in section.det_order:
                tags[nid] = "local_%d" % i
            for nid in section.absorbing:
                tags[nid] = "local_%d" % i
    lines = ["%d %s" % (nid, tags[nid]) for nid in sorted(tags)]
    return "\n".join(lines) + "\n"
