"""Central table of numerical defaults.

Every grid size, tolerance and guard used by the computational modules is read
from here so that ``tachyon-gr --print-defaults`` can show one authoritative
list.
"""

from __future__ import annotations

DEFAULTS: dict[str, float | int] = {
    # spacetime
    "fd_step_abs": 1e-6,            # finite-difference step floor
    "fd_step_rel": 1e-6,            # finite-difference step relative to |coordinate|
    "smoothed_quad_outer": 1e3,     # outer radius factor: r_max = outer * max(1, eps)
    "smoothed_quad_epsabs": 1e-9,
    # geodesic
    "classify_tol": 1e-9,
    "integrate_tol": 1e-10,
    "horizon_guard": 1e-6,          # stop at r_s (1 + guard)
    "closure_guard": 1e-6,          # stop at R (1 - guard)
    "axis_guard": 1e-2,             # stop power-law cylinders at r = guard (curvature singularity)
    "turning_scan_samples": 2048,
    "turning_bisect_rel": 1e-12,
    # linfield
    "grid_points": 4096,
    "grid_inner": 1e-3,             # times the source scale
    "grid_outer": 1e3,              # times the source scale
    # orbits
    "deflection_quad_epsrel": 1e-13,
    "bound_search_gamma_max": 5.0,
    "bound_search_gamma_steps": 51,
    "bound_search_L_count": 24,
    "bound_apo_fraction": 0.5,      # r_apo must stay below this fraction of the grid
    # kinematics
    "packet_divergence_threshold": 1e-12,
    "gas_quad_epsrel": 1e-10,
    "gas_ode_tol": 1e-10,
}


def get(name: str):
    return DEFAULTS[name]
