"""Stopped e-BH: sequential multiple testing with e-processes under global stopping."""

__version__ = "0.1.0"

from .ebh import bh, compound_from_rejection, compound_validity_mc, ebh, fdp
from .session import Observation, Session, run

__all__ = [
    "bh",
    "compound_from_rejection",
    "compound_validity_mc",
    "ebh",
    "fdp",
    "Observation",
    "Session",
    "run",
]
