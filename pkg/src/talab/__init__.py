"""Talab - tensor attention laboratory.

Exact p-bit float semantics, symbolic circuit-depth tracing of tensor
attention, exact deciders for the closure and ω-membership problems, and a
small numpy harness for training probes on them.

Example:
    >>> from talab import fpx
    >>> str(fpx.add(fpx.from_int(1, 3), fpx.from_int(2, 3)))
    '⟨6,-1⟩@3'
"""

import logging

from talab.errors import TalabError
from talab.fpx import FloatP, round_p

__version__ = "0.1.0"
__all__ = ["FloatP", "TalabError", "round_p"]

logging.getLogger(__name__).addHandler(logging.NullHandler())
