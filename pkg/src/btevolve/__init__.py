"""Workbench for evolving behaviour-tree controllers on a simulated
fly-through-window task: tree genome and tick semantics, synthetic stereo
sensing, planar flight simulation, fitness evaluation, and the genetic
programming loop, plus a command line front end."""

__version__ = "0.1.0"
