"""stirwalk: coalescing lattice-walk systems and a discrete-time symmetric
exclusion process, with exact small-ring verification and entropy estimation.
"""

__version__ = "0.1.0"
