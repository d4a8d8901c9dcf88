"""Program execution: directives in, sample records out.

A program is a list of directives; the assume/observe/predict prefix builds
the trace and each infer directive then runs its kernel schedule. After every
step (one sweep over the kernel's targets) the current value of every predict
label is recorded. Identical seeds give identical records.
"""

import csv
import io
import json

import numpy as np

from austere.errors import EvalError, UnsupportedKernel
from austere.mh import mh_transition
from austere.sexp import (
    CycleInfer,
    ForeignKernel,
    MHInfer,
    SubsampledMHInfer,
    desugar_program,
    parse_program,
)
from austere.submh import SubsampledDiagnostics, subsampled_mh_transition
from austere.trace import execute_program, wall_ns

CSV_HEADER = ("chain", "iter", "label", "value", "wall_ns", "consumed", "accepted")


def set_seed(seed):
    """Counter-based generator; spawned streams stay reproducible."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn_generators(seed, count):
    seqs = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(s)) for s in seqs]


def value_to_text(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, np.ndarray):
        return "[" + " ".join(repr(float(v)) for v in value) + "]"
    return str(value)


class SampleRecord:
    __slots__ = ("chain", "iteration", "label", "value", "wall_nanos", "consumed",
                 "accepted")

    def __init__(self, chain, iteration, label, value, wall_nanos, consumed,
                 accepted):
        self.chain = chain
        self.iteration = iteration
        self.label = label
        self.value = value
        self.wall_nanos = wall_nanos
        self.consumed = consumed
        self.accepted = accepted


class Recorder:
    def __init__(self):
        self.records = []
        self.diagnostics = SubsampledDiagnostics()

    def take_step(self, chain, iteration, trace, wall_nanos, consumed, accepted):
        for label, nid in trace.predictions.items():
            self.records.append(
                SampleRecord(
                    chain, iteration, label, trace.read_value(nid), wall_nanos,
                    consumed, accepted,
                )
            )

    def values(self, label, chain=None):
        return [
            r.value
            for r in self.records
            if r.label == label and (chain is None or r.chain == chain)
        ]

    def write_csv(self, stream):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.records:
            writer.writerow(
                (
                    r.chain,
                    r.iteration,
                    r.label,
                    value_to_text(r.value),
                    r.wall_nanos,
                    r.consumed,
                    r.accepted,
                )
            )

    def csv_text(self):
        out = io.StringIO()
        self.write_csv(out)
        return out.getvalue()

    def summary(self):
        labels = {}
        for r in self.records:
            labels.setdefault(r.label, []).append(r.value)
        out = {}
        for label, values in labels.items():
            first = values[0]
            if isinstance(first, bool):
                xs = np.array([1.0 if v else 0.0 for v in values])
            elif isinstance(first, float):
                xs = np.array(values, dtype=float)
            elif isinstance(first, np.ndarray):
                stacked = np.stack(values)
                out[label] = {
                    "count": len(values),
                    "mean": [float(v) for v in stacked.mean(axis=0)],
                    "std": [float(v) for v in stacked.std(axis=0, ddof=1)]
                    if len(values) > 1
                    else [0.0] * stacked.shape[1],
                }
                continue
            else:
                out[label] = {"count": len(values)}
                continue
            entry = {
                "count": int(xs.shape[0]),
                "mean": float(xs.mean()),
                "std": float(xs.std(ddof=1)) if xs.shape[0] > 1 else 0.0,
                "ess": float(effective_sample_size(xs)),
            }
            out[label] = entry
        return out

    def summary_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def effective_sample_size(xs):
    """ESS from the initial positive sequence of autocovariance pair sums."""
    xs = np.asarray(xs, dtype=float)
    n = xs.shape[0]
    if n < 2:
        return float(n)
    centered = xs - xs.mean()
    var = float(np.dot(centered, centered)) / n
    if var == 0.0:
        return float(n)
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    rho = acov / acov[0]
    total = -1.0  # pairs below count rho[0] = 1 twice
    t = 0
    while 2 * t + 1 < n:
        pair = rho[2 * t] + rho[2 * t + 1]
        if pair <= 0.0:
            break
        total += 2.0 * pair
        t += 1
    if total < 1.0:
        total = 1.0
    return n / total


def resolve_targets(trace, scope, target, rng):
    """Principal nodes for one step of a kernel aimed at scope/target."""
    if target in ("all", "one"):
        labels = trace.scope_labels(scope)
    else:
        labels = [target]
    principals = []
    for label in labels:
        nid = trace.principal_for(scope, label)
        if nid is None or trace.nodes[nid].observed:
            if target not in ("all", "one"):
                raise EvalError(
                    "target %r in scope %r is not an unobserved stochastic choice"
                    % (label, scope)
                )
            continue
        principals.append(nid)
    if target == "one" and principals:
        principals = [principals[rng.integers(len(principals))]]
    return principals


def run_infer(trace, infer_expr, rng, recorder, chain=0, iteration=0):
    """Execute one infer expression; returns the next iteration index."""
    if isinstance(infer_expr, MHInfer):
        for _ in range(infer_expr.steps):
            t0 = wall_ns()
            accepted = 0
            for principal in resolve_targets(
                trace, infer_expr.scope, infer_expr.target, rng
            ):
                res = mh_transition(trace, principal, infer_expr.proposal, rng)
                accepted += int(res.accepted)
            recorder.take_step(chain, iteration, trace, wall_ns() - t0, 0, accepted)
            iteration += 1
        return iteration
    if isinstance(infer_expr, SubsampledMHInfer):
        for _ in range(infer_expr.steps):
            t0 = wall_ns()
            accepted = 0
            consumed = 0
            for principal in resolve_targets(
                trace, infer_expr.scope, infer_expr.target, rng
            ):
                res = subsampled_mh_transition(
                    trace,
                    principal,
                    infer_expr.proposal,
                    rng,
                    infer_expr.batch_size,
                    infer_expr.tolerance,
                )
                accepted += int(res.accepted)
                consumed += res.consumed
                recorder.diagnostics.record(res)
            recorder.take_step(
                chain, iteration, trace, wall_ns() - t0, consumed, accepted
            )
            iteration += 1
        return iteration
    if isinstance(infer_expr, CycleInfer):
        for _ in range(infer_expr.repeats):
            for sub in infer_expr.kernels:
                iteration = run_infer(trace, sub, rng, recorder, chain, iteration)
        return iteration
    if isinstance(infer_expr, ForeignKernel):
        raise UnsupportedKernel("inference kernel %r is not available" % infer_expr.name)
    raise UnsupportedKernel("unrecognized infer expression %r" % (infer_expr,))


def run_directives(directives, seed, chains=1):
    """Execute a desugared program; returns (recorder, list of final traces)."""
    recorder = Recorder()
    traces = []
    rngs = spawn_generators(seed, chains)
    for chain in range(chains):
        rng = rngs[chain]
        trace, infers = execute_program(directives, rng)
        iteration = 0
        for infer_expr in infers:
            iteration = run_infer(trace, infer_expr, rng, recorder, chain, iteration)
        traces.append(trace)
    return recorder, traces


def run_source(text, bindings=None, seed=0, chains=1):
    directives = desugar_program(parse_program(text), bindings or {})
    return run_directives(directives, seed, chains=chains)


def parse_binding(text):
    """Parse one k=v command-line binding into (name, value)."""
    if "=" not in text:
        raise EvalError("binding %r is not of the form name=value" % text)
    name, raw = text.split("=", 1)
    name = name.strip()
    raw = raw.strip()
    if raw == "true":
        return name, True
    if raw == "false":
        return name, False
    if "," in raw:
        return name, np.array([float(p) for p in raw.split(",")], dtype=float)
    try:
        return name, float(raw)
    except ValueError:
        return name, raw


def summary_stats(values):
    xs = np.asarray(values, dtype=float)
    return {
        "count": int(xs.shape[0]),
        "mean": float(xs.mean()),
        "std": float(xs.std(ddof=1)) if xs.shape[0] > 1 else 0.0,
        "ess": float(effective_sample_size(xs)),
    }
