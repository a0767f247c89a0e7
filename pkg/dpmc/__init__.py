"""
dpmc: word-level hardware safety model checking.

IC3 over a datapath abstraction with counterexample-guided refinement and
datapath propagation.
"""

# Version info
__version__ = "0.1.0"
__author__ = "dpmc developers"

from .btor2 import parse_btor2, print_btor2, read_btor2
from .cegar import CheckResult, Verdict, dp_ic3, dp_refine
from .config import load_config
from .errors import DpmcError
from .ir import ConcreteTrace, TransitionSystem
from .propagation import LemmaStore, propagate

__all__ = [
    "CheckResult",
    "ConcreteTrace",
    "DpmcError",
    "LemmaStore",
    "TransitionSystem",
    "Verdict",
    "dp_ic3",
    "dp_refine",
    "load_config",
    "parse_btor2",
    "print_btor2",
    "propagate",
    "read_btor2",
]
