"""Masked-LM scorer bridge speaking the minimal-pair wire protocol."""

from .bridge import BridgeConfig, BridgeError, MaskScorer, OOVError, serve
from .vocab import vocab_dump

__version__ = "0.1.0"
