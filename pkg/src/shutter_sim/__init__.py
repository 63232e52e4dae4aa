"""Dual-rail Jones-calculus simulator of a polarization-preserving Pockels-cell shutter."""

__version__ = "0.1.0"
