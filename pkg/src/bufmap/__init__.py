"""Relevant-window buffer-map compression toolkit.

Codecs that strip already-known positions from periodic buffer maps, the
closed-form limits of their mean message lengths, an entropy-coding layer
with a matching binary arithmetic coder, and a Monte Carlo paired-peer
simulator that cross-checks the codecs against the limits over ideal and
lossy channels.
"""

from .window import BufferMap, RelevantWindow

__all__ = ["BufferMap", "RelevantWindow"]
__version__ = "0.1.0"
