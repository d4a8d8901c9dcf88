"""Subsampled Metropolis-Hastings with a sequential acceptance test.

The acceptance decision ln u < w_g + sum_i l_i is rewritten as a comparison
of the mean local weight mu = (1/N) sum l_i against the data-independent
threshold mu0 = (ln u - w_g) / N. Local sections are consumed in a random
order, a t test on the running mean decides as soon as the evidence clears
the tolerance, and only the consumed sections are ever brought up to date:
acceptance leaves the rest stale behind version counters.

Shapes the border split cannot express run the exact kernel instead and are
flagged as fallbacks in the result.
"""

import math
from collections import deque

import numpy as np

from austere import kernels
from austere.errors import InternalError
from austere.mh import mh_transition
from austere.scaffold import construct_scaffold, plan_subsampled
from austere.trace import (
    commit_fragment,
    detach_fragment,
    detach_section,
    regenerate_fragment,
    regenerate_section,
    restore_fragment,
    wall_ns,
)

H1 = "H1"
H2 = "H2"


class SequentialTestState:
    """Running decision state: Welford moments of consumed local weights
    against the threshold mu0, with finite-population correction."""

    __slots__ = ("N", "batch_size", "tolerance", "mu0", "n", "mean", "m2")

    def __init__(self, N, batch_size, tolerance, mu0):
        self.N = N
        self.batch_size = batch_size
        self.tolerance = tolerance
        self.mu0 = mu0
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, values, count):
        self.n, self.mean, self.m2 = kernels.welford_add(
            self.n, self.mean, self.m2, values, count
        )

    @property
    def mu_hat(self):
        return self.mean

    @property
    def sample_std(self):
        if self.n < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.n - 1))

    @property
    def std_error(self):
        sl = self.sample_std
        if sl == 0.0 or self.n >= self.N:
            return 0.0
        return (sl / math.sqrt(self.n)) * math.sqrt(
            1.0 - (self.n - 1.0) / (self.N - 1.0)
        )


def batch_decision(state):
    """H1 (accept), H2 (reject), or None (keep consuming).

    Exhaustion compares exactly, breaking a tie toward keeping the current
    state. Zero sample spread gives the t statistic no footing, so the walk
    continues; the corrected error hits zero at n = N anyway.
    """
    n = state.n
    if n >= state.N:
        if state.mu_hat > state.mu0:
            return H1
        return H2
    if n < 2:
        return None
    s = state.std_error
    if s == 0.0:
        return None
    t = abs(state.mu_hat - state.mu0) / s
    p = kernels.student_t_tail(t, n - 1)
    if p < state.tolerance:
        return H1 if state.mu_hat > state.mu0 else H2
    return None


def sequential_test(mu0, l_stream, batch_size, tolerance, rng):
    """Decide mu > mu0 versus mu < mu0 from a prefix of the population.

    l_stream is any indexable of per-item values (len + getitem); items are
    visited in a uniformly random order without replacement, batch_size at a
    time, until the t test clears the tolerance or the population runs out.
    Returns (decision, state).
    """
    N = len(l_stream)
    if N < 1:
        raise InternalError("sequential test over an empty population")
    state = SequentialTestState(N, batch_size, tolerance, mu0)
    order = rng.permutation(N)
    buf = np.empty(batch_size, dtype=float)
    i = 0
    while True:
        k = min(batch_size, N - state.n)
        if k <= 0:
            raise InternalError("sequential test ran past the population")
        for j in range(k):
            buf[j] = l_stream[order[i]]
            i += 1
        state.add(buf, k)
        decision = batch_decision(state)
        if decision is not None:
            return decision, state


class _SectionStream:
    """Indexable view of local-section weights, materialized on first touch.

    Each access detaches and regenerates one section, so after the test
    stops only the consumed sections have proposal-side values; the caller
    commits or restores them through touched_order.
    """

    __slots__ = ("trace", "sections", "override", "touched_order", "nodes_touched")

    def __init__(self, trace, sections, override):
        self.trace = trace
        self.sections = sections
        self.override = override
        self.touched_order = []
        self.nodes_touched = 0

    def __len__(self):
        return len(self.sections)

    def __getitem__(self, index):
        section = self.sections[index]
        lw = detach_section(self.trace, section, self.override)
        lw += regenerate_section(self.trace, section)
        self.touched_order.append(section)
        self.nodes_touched += section.size()
        return lw


class SubTransitionResult:
    __slots__ = ("accepted", "decision", "consumed", "section_count", "fallback",
                 "log_u", "mu0", "mu_hat", "nodes_touched", "wall_nanos")

    def __init__(self, accepted, decision, consumed, section_count, fallback,
                 log_u, mu0, mu_hat, nodes_touched, wall_nanos):
        self.accepted = accepted
        self.decision = decision
        self.consumed = consumed
        self.section_count = section_count
        self.fallback = fallback
        self.log_u = log_u
        self.mu0 = mu0
        self.mu_hat = mu_hat
        self.nodes_touched = nodes_touched
        self.wall_nanos = wall_nanos

    def __repr__(self):
        return "SubTransitionResult(%s, consumed=%d/%d%s)" % (
            self.decision,
            self.consumed,
            self.section_count,
            ", fallback" if self.fallback else "",
        )


def subsampled_mh_transition(trace, principal, proposal, rng, batch_size,
                             tolerance, u=None, scaffold=None, forced_value=None,
                             measure_only=False):
    """One subsampled transition at `principal`.

    u is drawn before anything else touches the rng, so an exact transition
    run from the same state with the same u must agree whenever the
    sequential test consumes every section.
    """
    t0 = wall_ns()
    if u is None:
        u = rng.random()
    if not 0.0 <= u < 1.0:
        raise InternalError("acceptance uniform outside [0, 1)")
    log_u = math.log(u) if u > 0.0 else -math.inf
    if scaffold is None:
        scaffold = construct_scaffold(trace, principal)
    plan = plan_subsampled(trace, scaffold, batch_size)
    if not plan.ok:
        inner = mh_transition(
            trace, principal, proposal, rng, u=u, scaffold=scaffold,
            forced_value=forced_value, measure_only=measure_only,
        )
        consumed = plan.section_count if plan.sections else len(scaffold.absorbing)
        return SubTransitionResult(
            accepted=inner.accepted,
            decision=H1 if inner.accepted else H2,
            consumed=consumed,
            section_count=consumed,
            fallback=True,
            log_u=log_u,
            mu0=math.nan,
            mu_hat=math.nan,
            nodes_touched=inner.nodes_touched,
            wall_nanos=wall_ns() - t0,
        )
    gfrag = plan.global_fragment
    log_w_global = detach_fragment(trace, gfrag, proposal)
    override = {
        nid: (snap.value, snap.version) for nid, snap in gfrag.snapshots.items()
    }
    log_w_global += regenerate_fragment(
        trace, gfrag, proposal, rng, forced_value=forced_value
    )
    N = len(plan.sections)
    if gfrag.aborted:
        restore_fragment(trace, gfrag)
        return SubTransitionResult(
            accepted=False, decision=H2, consumed=0, section_count=N,
            fallback=False, log_u=log_u, mu0=math.nan, mu_hat=math.nan,
            nodes_touched=gfrag.size(), wall_nanos=wall_ns() - t0,
        )
    mu0 = (log_u - log_w_global) / N
    stream = _SectionStream(trace, plan.sections, override)
    decision, state = sequential_test(mu0, stream, batch_size, tolerance, rng)
    accepted = decision == H1
    if accepted and not measure_only:
        for section in stream.touched_order:
            commit_fragment(trace, section)
        commit_fragment(trace, gfrag)
        if state.n < N:
            trace.has_lazy_state = True
    else:
        for section in reversed(stream.touched_order):
            restore_fragment(trace, section)
        restore_fragment(trace, gfrag)
    return SubTransitionResult(
        accepted=accepted, decision=decision, consumed=state.n, section_count=N,
        fallback=False, log_u=log_u, mu0=mu0, mu_hat=state.mu_hat,
        nodes_touched=gfrag.size() + stream.nodes_touched,
        wall_nanos=wall_ns() - t0,
    )


def collect_section_weights(trace, principal, proposal, rng, batch_size,
                            forced_value=None):
    """Evaluate every section's weight for one proposal and restore the trace.

    Returns (log_w_global, array of local weights). This is the ground truth
    the sequential test estimates; the error-curve protocol replays the test
    purely statistically on top of it.
    """
    scaffold = construct_scaffold(trace, principal)
    plan = plan_subsampled(trace, scaffold, batch_size)
    if not plan.ok:
        raise InternalError("no border split: %s" % plan.reason)
    gfrag = plan.global_fragment
    log_w_global = detach_fragment(trace, gfrag, proposal)
    override = {
        nid: (snap.value, snap.version) for nid, snap in gfrag.snapshots.items()
    }
    log_w_global += regenerate_fragment(
        trace, gfrag, proposal, rng, forced_value=forced_value
    )
    if gfrag.aborted:
        restore_fragment(trace, gfrag)
        raise InternalError("proposal has zero prior density")
    weights = np.empty(len(plan.sections), dtype=float)
    done = []
    for idx, section in enumerate(plan.sections):
        lw = detach_section(trace, section, override)
        lw += regenerate_section(trace, section)
        weights[idx] = lw
        done.append(section)
    for section in reversed(done):
        restore_fragment(trace, section)
    restore_fragment(trace, gfrag)
    return log_w_global, weights


def simulate_decision(local_weights, order, state):
    """Replay the sequential test on precomputed weights; returns (decision,
    consumed)."""
    N = state.N
    m = state.batch_size
    buf = np.empty(m, dtype=float)
    decision = None
    i = 0
    while decision is None:
        k = min(m, N - state.n)
        for j in range(k):
            buf[j] = local_weights[order[i]]
            i += 1
        state.add(buf, k)
        decision = batch_decision(state)
    return decision, state.n


def empirical_error_curve(l_population, mu0, eps_grid, trials, rng,
                          batch_size=100):
    """Decision error rate of the sequential test versus the exact rule.

    Each trial draws one consumption order and shares it across the whole
    tolerance grid (common random numbers keep the curve comparable). The
    exact oracle compares the full-population mean against mu0 once. Returns
    rows (tolerance, error_rate, standard_error, mean_consumed).

    Batch statistics are evaluated on prefix sums of the mean-centered
    population, which keeps a degenerate all-equal population at exactly
    zero spread and never stops its test early.
    """
    pop = np.asarray(l_population, dtype=float)
    N = pop.shape[0]
    if N < 1:
        raise InternalError("error curve over an empty population")
    shift = float(pop.mean())
    centered = pop - shift
    mu0c = mu0 - shift
    exact_h1 = float(centered.sum()) / N > mu0c
    eps_list = list(eps_grid)
    eps_min = min(eps_list)
    bounds = np.arange(batch_size, N + 1, batch_size, dtype=np.intp)
    if bounds.size == 0 or bounds[-1] != N:
        bounds = np.append(bounds, N)
    nf = bounds.astype(float)
    fpc = np.sqrt(1.0 - (nf - 1.0) / (N - 1.0)) if N > 1 else np.zeros(1)
    errors = {eps: 0 for eps in eps_list}
    consumed_totals = {eps: 0 for eps in eps_list}
    for _ in range(trials):
        x = centered[rng.permutation(N)]
        cs = np.cumsum(x)
        cs2 = np.cumsum(x * x)
        means = cs[bounds - 1] / nf
        var = np.maximum(cs2[bounds - 1] - nf * means * means, 0.0)
        var[nf < 2.0] = 0.0
        var[nf >= 2.0] /= nf[nf >= 2.0] - 1.0
        s = np.sqrt(var / nf) * fpc
        # p values are tolerance-free; scan until the strictest tolerance
        # would have stopped, later boundaries decide for nobody
        stop_p = []
        stop_h1 = []
        for b in range(bounds.size - 1):
            if s[b] <= 0.0:
                stop_p.append(2.0)
                stop_h1.append(False)
                continue
            t = abs(means[b] - mu0c) / s[b]
            p = kernels.student_t_tail(t, int(bounds[b]) - 1)
            stop_p.append(p)
            stop_h1.append(means[b] > mu0c)
            if p < eps_min:
                break
        final_h1 = means[-1] > mu0c
        for eps in eps_list:
            decided = None
            consumed = N
            for b, p in enumerate(stop_p):
                if p < eps:
                    decided = stop_h1[b]
                    consumed = int(bounds[b])
                    break
            if decided is None:
                decided = final_h1
            consumed_totals[eps] += consumed
            if decided != exact_h1:
                errors[eps] += 1
    rows = []
    for eps in eps_list:
        rate = errors[eps] / trials
        se = math.sqrt(max(rate * (1.0 - rate), 1.0 / trials) / trials)
        rows.append((eps, rate, se, consumed_totals[eps] / trials))
    return rows


def normality_diagnostic(values):
    """Omnibus skewness/kurtosis normality statistic.

    The statistic combines transformed sample skewness and kurtosis; under
    normality it is chi squared with two degrees of freedom, so its survival
    probability is exp(-k2/2). A constant sample is flat rather than
    non-normal and scores 0.
    """
    xs = np.asarray(values, dtype=float)
    n = xs.shape[0]
    if n < 20:
        raise InternalError("normality diagnostic needs at least 20 samples")
    mean = xs.mean()
    centered = xs - mean
    m2 = float(np.mean(centered**2))
    if m2 <= 0.0:
        return 0.0
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    g1 = m3 / m2**1.5
    g2 = m4 / m2**2 - 3.0
    # skewness transform
    y = g1 * math.sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)))
    beta2 = (
        3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0))
    )
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(math.log(math.sqrt(w2)))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    if y == 0.0:
        z1 = 0.0
    else:
        z1 = delta * math.log(y / alpha + math.sqrt((y / alpha) ** 2 + 1.0))
    # kurtosis transform
    e_g2 = -6.0 / (n + 1.0)
    var_g2 = (
        24.0 * n * (n - 2.0) * (n - 3.0)
        / ((n + 1.0) ** 2 * (n + 3.0) * (n + 5.0))
    )
    x = (g2 - e_g2) / math.sqrt(var_g2)
    sqrt_beta1 = (
        6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
    ) * math.sqrt(6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0)))
    a = 6.0 + 8.0 / sqrt_beta1 * (
        2.0 / sqrt_beta1 + math.sqrt(1.0 + 4.0 / sqrt_beta1**2)
    )
    term = (1.0 - 2.0 / a) / (1.0 + x * math.sqrt(2.0 / (a - 4.0)))
    z2 = (
        (1.0 - 2.0 / (9.0 * a)) - math.copysign(abs(term) ** (1.0 / 3.0), term)
    ) * math.sqrt(9.0 * a / 2.0)
    return z1 * z1 + z2 * z2


class SubsampledDiagnostics:
    """Aggregates per-transition results for the operator-facing summary."""

    def __init__(self, window=512):
        self.transitions = 0
        self.accepted = 0
        self.fallbacks = 0
        self.consumed_hist = {}
        self.recent_mu_hats = deque(maxlen=window)

    def record(self, result):
        self.transitions += 1
        if result.accepted:
            self.accepted += 1
        if result.fallback:
            self.fallbacks += 1
        self.consumed_hist[result.consumed] = (
            self.consumed_hist.get(result.consumed, 0) + 1
        )
        if not result.fallback and result.mu_hat == result.mu_hat:
            self.recent_mu_hats.append(result.mu_hat)

    def summary(self, trace=None):
        out = {
            "transitions": self.transitions,
            "accepted": self.accepted,
            "fallbacks": self.fallbacks,
            "consumed_hist": dict(sorted(self.consumed_hist.items())),
        }
        if trace is not None:
            out["stale_repairs"] = trace.stale_repairs
        if len(self.recent_mu_hats) >= 20:
            k2 = normality_diagnostic(np.array(self.recent_mu_hats, dtype=float))
            out["mu_hat_normality_k2"] = k2
            out["mu_hat_normality_p"] = math.exp(-k2 / 2.0)
        return out
