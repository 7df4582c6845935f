"""Pseudospectral toolkit for first-order hyperbolic Stratonovich SPDEs on a periodic line."""
from .grid import Field, Grid1D, Mollifier, dft, idft, mollifier_gap, mollify, sobolev_inner, sobolev_norm
from .noise import (BrownianPath, CameronMartinPath, PolygonalPath, cm_action, girsanov_shift,
                    likelihood_ratio, polygonalize, sample_brownian)
from .symbols import (SeparableSymbol, TimeSymbolFamily, adjoint_symbol, apply_adjoint, apply_pdo,
                      estimate_conditions, make_symmetrized_transport, make_transport)
from .evolve import (BlowUpError, EvolveConfig, SpdeProblem, Trajectory, backward_solve, energy_report,
                     evolution_apply, integrate_spde, skeleton_solve, wong_zakai_solve)

__version__ = "0.1.0"

__all__ = [
    "Field", "Grid1D", "Mollifier", "dft", "idft", "mollifier_gap", "mollify", "sobolev_inner",
    "sobolev_norm", "BrownianPath", "CameronMartinPath", "PolygonalPath", "cm_action", "girsanov_shift",
    "likelihood_ratio", "polygonalize", "sample_brownian", "SeparableSymbol", "TimeSymbolFamily",
    "adjoint_symbol", "apply_adjoint", "apply_pdo", "estimate_conditions", "make_symmetrized_transport",
    "make_transport", "BlowUpError", "EvolveConfig", "SpdeProblem", "Trajectory", "backward_solve",
    "energy_report", "evolution_apply", "integrate_spde", "skeleton_solve", "wong_zakai_solve",
]
