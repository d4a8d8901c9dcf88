"""Proposal specifications for single-site transitions.

PriorResimulation redraws the principal from its own prior (the forward and
reverse proposal densities cancel against the prior terms exactly, so weight
bookkeeping adds literal zeros). GaussianDrift adds centered Gaussian noise
with a fixed per-component width; it is symmetric, so its q-terms are coded as
exact zeros rather than two cancelling evaluations.
"""

import numbers

from austere.errors import ParseError


class ProposalSpec:
    kind = ""

    def validate(self):
        pass

    def resolve(self, bindings):
        return self


class PriorResimulation(ProposalSpec):
    kind = "prior"

    def __repr__(self):
        return "PriorResimulation()"

    def __eq__(self, other):
        return isinstance(other, PriorResimulation)

    def __hash__(self):
        return hash("prior")


class GaussianDrift(ProposalSpec):
    """Symmetric random-walk proposal; width may be a Placeholder pre-desugar."""

    kind = "drift"

    def __init__(self, width):
        self.width = width

    def validate(self):
        width = self.width
        if isinstance(width, numbers.Real) and not isinstance(width, bool):
            if not width > 0.0:
                raise ParseError("drift width must be positive, got %r" % width)
        # Placeholders are validated after desugaring resolves them

    def resolve(self, bindings):
        width = self.width
        if hasattr(width, "name") and hasattr(width, "index"):  # Placeholder leaf
            from austere.sexp import _resolve

            width = _resolve(width, bindings)
        out = GaussianDrift(width)
        out.validate()
        return out

    def __repr__(self):
        return "GaussianDrift(%r)" % (self.width,)

    def __eq__(self, other):
        return isinstance(other, GaussianDrift) and self.width == other.width

    def __hash__(self):
        return hash(("drift", self.width))
