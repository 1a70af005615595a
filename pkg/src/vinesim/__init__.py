"""Simulation and design optimization for actuated soft growing (vine) robots.

Modules, bottom-up:

``special``     incomplete elliptic integrals (Carlson forms)
``spam``        series pneumatic artificial muscle strain/force model
``beam``        restoring moment of the inflated body, free-space equilibrium
``surrogate``   small MLP surrogate for the actuator model
``synthesis``   target bend to (pressure, unit length) design synthesis
``scene``       planar scenes, benchmark environments, perturbations
``simulator``   quasi-static growth simulation with contact
``planner``     SST* design search with a biarc cost-to-go heuristic
``cli``         command-line entry point (``python -m vinesim``)
"""
import os as _os

# TBB is probed first by numba and warns on older installs; prefer OpenMP.
_os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

__version__ = "0.1.0"
