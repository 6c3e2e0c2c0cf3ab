"""Cycle-accurate behavioral models of RC4 hardware datapaths.

Designs 1-4 are single engines (1 or 2 bytes per clock, with static or
dynamic KSA/PRGA reuse). Designs 5-6 compose several engines into a
4-byte-per-clock lane-parallel generator.
"""

from rc4sim.errors import (
    InvariantViolation,
    PreconditionError,
    RejectedInput,
    UnsupportedDesign,
)
from rc4sim.rc4_ref import keystream, ksa_reference, prga_reference, xor_cipher

__version__ = "0.1.0"

__all__ = [
    "InvariantViolation",
    "PreconditionError",
    "RejectedInput",
    "UnsupportedDesign",
    "keystream",
    "ksa_reference",
    "prga_reference",
    "xor_cipher",
]
