"""Single-site Metropolis-Hastings on execution traces."""

import math

from austere.errors import InternalError
from austere.scaffold import construct_scaffold
from austere.trace import (
    commit_fragment,
    detach_fragment,
    regenerate_fragment,
    restore_fragment,
    wall_ns,
)


class _FixedProposal:
    """Deterministic proposal used by reversibility tests and the fixed-pair
    timing protocol; weighted like any other non-prior (symmetric) proposal."""

    kind = "fixed"

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


class TransitionResult:
    __slots__ = ("accepted", "log_accept", "nodes_touched", "wall_nanos")

    def __init__(self, accepted, log_accept, nodes_touched, wall_nanos):
        self.accepted = accepted
        self.log_accept = log_accept
        self.nodes_touched = nodes_touched
        self.wall_nanos = wall_nanos

    def __repr__(self):
        return "TransitionResult(accepted=%r, log_accept=%r, nodes=%d)" % (
            self.accepted,
            self.log_accept,
            self.nodes_touched,
        )


def acceptance_log_ratio(log_w_global, log_w_locals):
    """log of the clamped acceptance probability from section weights."""
    return min(0.0, log_w_global + math.fsum(log_w_locals))


def mh_transition(trace, principal, proposal, rng, u=None, scaffold=None,
                  forced_value=None, measure_only=False):
    """One exact transition at `principal`; returns a TransitionResult.

    The uniform u is drawn before anything else touches the rng, so a caller
    can reproduce or share the accept threshold of a transition exactly.
    measure_only reports the decision but always restores the pre-proposal
    state (timing protocols re-run one fixed transition many times).
    """
    t0 = wall_ns()
    if u is None:
        u = rng.random()
    if not 0.0 <= u < 1.0:
        raise InternalError("acceptance uniform outside [0, 1)")
    log_u = math.log(u) if u > 0.0 else -math.inf
    if scaffold is None:
        scaffold = construct_scaffold(trace, principal)
    log_w = detach_fragment(trace, scaffold, proposal)
    log_w += regenerate_fragment(trace, scaffold, proposal, rng,
                                 forced_value=forced_value)
    log_accept = min(0.0, log_w)
    accepted = (not scaffold.aborted) and log_u < log_w
    if accepted and not measure_only:
        commit_fragment(trace, scaffold)
    else:
        restore_fragment(trace, scaffold)
    return TransitionResult(accepted, log_accept, scaffold.size(), wall_ns() - t0)
