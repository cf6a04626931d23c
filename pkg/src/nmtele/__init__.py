"""Continuous-variable teleportation through non-Markovian channels.

A channel's colored noise is produced by damped ancilla oscillators coupled
to the transmitted mode; the joint system obeys a Lindblad master equation.
"""
__version__ = "0.1.0"
