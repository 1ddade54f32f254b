"""Numerical tools for fully nonlinear form-type equations on Hermitian manifolds.

Submodules: hermitian_core, form_algebra, operator, cone, solver, dhym,
variational, product_lift, cli.
"""

__version__ = "0.1.0"
