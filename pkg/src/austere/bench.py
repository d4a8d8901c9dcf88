"""Benchmark models and measurement protocols.

Three model families: Bayesian logistic regression (the sublinearity and
error-curve workloads), a stochastic volatility panel (the quality/throughput
workload), and a conjugate normal-normal pair (the correctness sanity check
with a closed-form posterior).

The scaling protocols hold one (current value, proposed value) pair fixed and
re-run the same transition many times in measure-only mode, so the only
variation left is the acceptance uniform and the consumption order.
"""

import csv
import math

import numpy as np

from austere import kernels
from austere.mh import _FixedProposal, mh_transition
from austere.proposals import GaussianDrift
from austere.runner import (
    effective_sample_size,
    run_directives,
    set_seed,
)
from austere.sexp import (
    Assume,
    Combination,
    Constant,
    Observe,
    Predict,
    Symbol,
    parse_program,
)
from austere.submh import (
    collect_section_weights,
    empirical_error_curve,
    subsampled_mh_transition,
)
from austere.trace import execute_program, wall_ns


# --- Bayesian logistic regression --------------------------------------------

TRUE_WEIGHTS = np.array([1.5, -2.0, 0.75])


def gen_logistic_data(count, rng, weights=None):
    """Inputs with a trailing bias one; labels from the logistic likelihood."""
    w = TRUE_WEIGHTS if weights is None else np.asarray(weights, dtype=float)
    dim = w.shape[0]
    xs = np.empty((count, dim))
    xs[:, : dim - 1] = rng.standard_normal((count, dim - 1))
    xs[:, dim - 1] = 1.0
    ps = np.array([kernels.sigmoid(float(xs[i] @ w)) for i in range(count)])
    ys = rng.random(count) < ps
    return xs, ys


def build_logistic_program(xs, ys, prior_scale=0.1):
    """Directive list: one weight vector, one observation per row."""
    dim = xs.shape[1]
    cov = prior_scale * np.eye(dim)
    prior = Combination(
        Symbol("multivariate_normal"),
        (Constant(np.zeros(dim)), Constant(cov)),
    )
    directives = [
        Assume("w", Combination(Symbol("scope_include"),
                                (Constant("w"), Constant(0.0), prior)))
    ]
    for i in range(xs.shape[0]):
        likelihood = Combination(
            Symbol("bernoulli"),
            (
                Combination(
                    Symbol("linear_logistic"),
                    (Symbol("w"), Constant(np.array(xs[i]))),
                ),
            ),
        )
        directives.append(Observe(likelihood, Constant(bool(ys[i]))))
    directives.append(Predict(Symbol("w"), "w"))
    return directives


def build_logistic_trace(count, seed, prior_scale=0.1):
    rng = set_seed(seed)
    xs, ys = gen_logistic_data(count, rng)
    directives = build_logistic_program(xs, ys, prior_scale)
    trace, _ = execute_program(directives, rng)
    principal = trace.principal_for("w", 0.0)
    return trace, principal, rng


# --- sublinearity protocol ----------------------------------------------------

SUBLINEARITY_HEADER = (
    "N",
    "mean_consumed",
    "mean_wall_ns",
    "exact_nodes_touched",
    "exact_wall_ns",
)


def run_sublinearity(seed=7, n_grid=None, tolerance=0.01, batch_size=100,
                     trials=300, exact_trials=30, step_scale=0.02):
    """Fixed-pair cost of a subsampled transition across observation counts.

    Every measured transition starts from the same trace state and proposes
    the same displaced weight vector; measure-only mode restores the state
    after each repeat. Returns rows matching SUBLINEARITY_HEADER.
    """
    if n_grid is None:
        n_grid = [int(round(10.0**e)) for e in (3.0, 3.5, 4.0, 4.5, 5.0)]
    rows = []
    for count in n_grid:
        trace, principal, rng = build_logistic_trace(count, seed)
        theta = trace.read_value(principal)
        theta_star = theta + step_scale * np.ones_like(theta)
        consumed = np.empty(trials)
        walls = np.empty(trials)
        for t in range(trials):
            res = subsampled_mh_transition(
                trace, principal, _FixedProposal(theta_star), rng,
                batch_size, tolerance, forced_value=theta_star,
                measure_only=True,
            )
            consumed[t] = res.consumed
            walls[t] = res.wall_nanos
        exact_walls = np.empty(exact_trials)
        exact_nodes = 0
        for t in range(exact_trials):
            res = mh_transition(
                trace, principal, _FixedProposal(theta_star), rng,
                forced_value=theta_star, measure_only=True,
            )
            exact_nodes = res.nodes_touched
            exact_walls[t] = res.wall_nanos
        rows.append(
            (
                count,
                float(consumed.mean()),
                float(walls.mean()),
                exact_nodes,
                float(exact_walls.mean()),
            )
        )
    return rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


# --- decision error curve -------------------------------------------------------

ERROR_CURVE_HEADER = ("tolerance", "error_rate", "standard_error", "mean_consumed")


def run_error_curve(seed=11, count=10000, tolerances=(0.1, 0.01, 0.001),
                    batch_size=100, trials=10000, step_scale=0.02):
    """Sequential-test decision error against the exact rule, one fixed pair."""
    trace, principal, rng = build_logistic_trace(count, seed)
    theta = trace.read_value(principal)
    theta_star = theta + step_scale * np.ones_like(theta)
    log_w_global, local_weights = collect_section_weights(
        trace, principal, _FixedProposal(theta_star), rng, batch_size,
        forced_value=theta_star,
    )
    return empirical_error_curve(
        log_w_global, local_weights, list(tolerances), batch_size, trials, rng
    )


# --- stochastic volatility panel ---------------------------------------------

SV_PHI = 0.95
SV_SIGMA = 0.1


def gen_sv_data(series, length, rng, phi=SV_PHI, sigma=SV_SIGMA):
    """Latent AR(1) log-volatilities started at zero; returns observations."""
    ys = np.empty((series, length))
    for s in range(series):
        h = 0.0
        for t in range(length):
            h = phi * h + sigma * rng.standard_normal()
            ys[s, t] = math.exp(h / 2.0) * rng.standard_normal()
    return ys


def build_sv_program(ys):
    """Directive list for the volatility panel.

    Latent states are memoized per (series, time) and labeled in the 'h
    scope; the time-zero state is pinned at zero so every chain has a fixed
    anchor. Observation t uses the state's half-log variance as its scale.
    """
    series, length = ys.shape
    lines = [
        "[assume phi (scope_include 'phi 0.0 (beta 5.0 1.0))]",
        "[assume sigma2 (scope_include 'sigma 0.0 (inv_gamma 5.0 0.05))]",
        "[assume sigma (sqrt sigma2)]",
        "[assume h (mem (lambda (s t)"
        " (scope_include 'h (+ (* s 1000.0) t)"
        " (if (<= t 0.0) 0.0 (normal (* phi (h s (- t 1.0))) sigma)))))]",
        "[predict phi]",
        "[predict sigma2]",
    ]
    directives = parse_program("\n".join(lines))
    for s in range(series):
        for t in range(1, length + 1):
            state = Combination(
                Symbol("h"), (Constant(float(s)), Constant(float(t)))
            )
            scale = Combination(
                Symbol("exp"),
                (Combination(Symbol("/"), (state, Constant(2.0))),),
            )
            likelihood = Combination(
                Symbol("normal"), (Constant(0.0), scale)
            )
            directives.append(Observe(likelihood, Constant(float(ys[s, t - 1]))))
    return directives


class SVSchedule:
    """One sweep of the volatility sampler: all states, then the two globals.

    state_reps repeats the state sweep so the realized state-to-parameter
    transition ratio can be tuned; the realized ratio is reported alongside
    the samples.
    """

    def __init__(self, state_width=0.02, param_width=0.01, state_reps=1,
                 param_reps=1):
        self.state_width = state_width
        self.param_width = param_width
        self.state_reps = state_reps
        self.param_reps = param_reps


def run_sv_chain(ys, seed, sweeps, subsampled, schedule=None, batch_size=25,
                 tolerance=0.01, burnin=0):
    """Run one SV chain; returns dict with samples, wall time, and counts."""
    if schedule is None:
        schedule = SVSchedule()
    rng = set_seed(seed)
    directives = build_sv_program(ys)
    trace, _ = execute_program(directives, rng)
    state_drift = GaussianDrift(schedule.state_width)
    param_drift = GaussianDrift(schedule.param_width)
    phi_nid = trace.principal_for("phi", 0.0)
    sigma_nid = trace.principal_for("sigma", 0.0)
    state_nids = [
        nid
        for nid in (
            trace.principal_for("h", label) for label in trace.scope_labels("h")
        )
        if nid is not None
    ]
    phi_samples = []
    sigma_samples = []
    state_transitions = 0
    param_transitions = 0
    t0 = wall_ns()
    for sweep in range(sweeps):
        for _ in range(schedule.state_reps):
            for nid in state_nids:
                mh_transition(trace, nid, state_drift, rng)
                state_transitions += 1
        for _ in range(schedule.param_reps):
            for nid in (phi_nid, sigma_nid):
                if subsampled:
                    subsampled_mh_transition(
                        trace, nid, param_drift, rng, batch_size, tolerance
                    )
                else:
                    mh_transition(trace, nid, param_drift, rng)
                param_transitions += 1
        if sweep >= burnin:
            phi_samples.append(trace.read_value(phi_nid))
            sigma_samples.append(trace.read_value(sigma_nid))
    elapsed = wall_ns() - t0
    phi_arr = np.array(phi_samples)
    sigma_arr = np.array(sigma_samples)
    return {
        "phi": phi_arr,
        "sigma2": sigma_arr,
        "wall_ns": elapsed,
        "state_transitions": state_transitions,
        "param_transitions": param_transitions,
        "ratio": state_transitions / max(param_transitions, 1),
        "ess_phi": effective_sample_size(phi_arr),
        "ess_sigma2": effective_sample_size(sigma_arr),
    }


SV_HEADER = ("sampler", "iter", "phi", "sigma2")


def run_sv_comparison(seed=23, series=50, length=5, sweeps=600, burnin=100,
                      schedule=None, batch_size=25, tolerance=0.01):
    """Exact and subsampled SV chains on the same data; returns both results."""
    data_rng = set_seed(seed)
    ys = gen_sv_data(series, length, data_rng)
    exact = run_sv_chain(
        ys, seed + 1, sweeps, subsampled=False, schedule=schedule,
        batch_size=batch_size, tolerance=tolerance, burnin=burnin,
    )
    sub = run_sv_chain(
        ys, seed + 2, sweeps, subsampled=True, schedule=schedule,
        batch_size=batch_size, tolerance=tolerance, burnin=burnin,
    )
    return exact, sub


def sv_rows(exact, sub):
    rows = []
    for i in range(exact["phi"].shape[0]):
        rows.append(("exact", i, repr(float(exact["phi"][i])),
                     repr(float(exact["sigma2"][i]))))
    for i in range(sub["phi"].shape[0]):
        rows.append(("subsampled", i, repr(float(sub["phi"][i])),
                     repr(float(sub["sigma2"][i]))))
    return rows


# --- conjugate check -----------------------------------------------------------

CONJUGATE_PROGRAM = """
[assume mu (scope_include 'mu 0.0 (normal 0.0 1.0))]
[observe (normal mu 1.0) 2.0]
[predict mu]
[infer (mh 'mu all 'drift 0.5 {steps})]
"""

CONJUGATE_MEAN = 1.0
CONJUGATE_VAR = 0.5


def run_conjugate_check(seed=3, steps=20000, burnin=500):
    """Drift sampler against the closed-form normal-normal posterior."""
    from austere.runner import run_source

    recorder, _ = run_source(
        CONJUGATE_PROGRAM, bindings={"steps": float(steps)}, seed=seed
    )
    values = np.array(recorder.values("mu")[burnin:], dtype=float)
    return {
        "samples": values,
        "posterior_mean": CONJUGATE_MEAN,
        "posterior_var": CONJUGATE_VAR,
        "sample_mean": float(values.mean()),
        "sample_var": float(values.var(ddof=1)),
        "ess": effective_sample_size(values),
    }
