"""Numerical checks for weighted Sasaki metrics on tangent and tangent sphere bundles.

Modules: ``dsl`` (scalar-field expressions), ``jets`` (exact Taylor jets),
``geometry`` (charts, connections, curvature), ``tangent`` (TM structures),
``sphere`` (S_rM curvature), ``homothety`` (map verdicts), ``chern_weil``
(characteristic forms) and ``cli``.
"""

__version__ = "0.1.0"
