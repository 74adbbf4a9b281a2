"""Variational solver for nonlocal Kirchhoff double phase Dirichlet problems."""

from .errors import (BracketFailure, ConfigError, DphaseError, InvalidArgument,
                     NumericDomainError, ProjectionFailure, SolverSetupError)
from .mesh import (CellField, Mesh, MeshFunction, build_mesh, gradient,
                   integrate_cells, integrate_nodal, split_parts)
from .orlicz import (Exponents, Weight, check_modular_relations, luxemburg_norm,
                     modular, p_norm, weighted_q_seminorm)
from .problem import (HypothesisReport, KirchhoffCoeffs, Nonlinearity, ProblemSpec,
                      check_hypotheses, default_spec, eval_F, eval_f,
                      spec_from_config, spec_to_config)
from .energy import (EnergyReport, Residual, operator_pairing, pairings, phi,
                     phi_H, phi_truncated, psi, residual, truncated_residual)

__version__ = "0.1.0"
