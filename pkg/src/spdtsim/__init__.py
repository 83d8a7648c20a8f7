"""spdtsim: temporal contact networks with same-place different-time links,
airborne SIR simulation, and vaccination strategy experiments."""

__version__ = "0.1.0"
