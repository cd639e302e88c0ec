"""Provenance-based threat hunting: compact graph store, rule-driven sampling,
and contrastive graph matching."""

__version__ = "0.1.0"

from .vocab import AbsType, EdgeOp, EntityKind, abs_sets, abstract_node  # noqa: F401
