"""Numerical tools for S^1-invariant conformally Kahler Einstein 4-metrics
with cusps: Toda-type boundary value problems on a cylinder over a closed
surface, closed-form model families, metric assembly with curvature
diagnostics, energy/stability/degeneration experiments, and toral black hole
matching arithmetic.

Submodules
----------
cross_section : flat tori and synthetic-spectrum surface surrogates
models        : closed-form xi-only solution families and their case tables
solver        : canonical-PDE Newton/continuation solver and BVP adapters
metric        : W, connection form, 4-metric assembly
curvature     : finite-difference Riemann/Ricci/Weyl diagnostics
diagnostics   : H^{-1} energy, stability and degeneration experiments
dehn          : toral black hole matching arithmetic and glued defect
cli           : batch driver over plain-text run configurations
"""

__version__ = "0.1.0"
