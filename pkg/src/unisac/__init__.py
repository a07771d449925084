"""UNISAC simulator: slotted unsourced sensing and communication over a ULA uplink."""

__version__ = "0.1.0"
