"""Retarded potentials and fields of prescribed flows of charged matter."""
from .dsl import ExprDomainError, Jet3, ParseError, eval_jet3, parse_expr
from .fields import (
    FieldSample, ResidualReport, dalembertian, faraday_tensor, fields_feynman,
    fields_from_potentials_fd, gauge_residual, gravity_fields, potentials, residuals,
)
from .flow import FlowModel, OutsideSupportError, SupportRegion, kinematics, validate_flow
from .fundamentals import (
    FundamentalFields, FundamentalJacobian, analytic_jacobian, eval_fundamentals,
    fd_jacobian, identity_defects,
)
from .distrib import BumpTestFunction, uz_field, weak_derivative_pairing
from .kernel import BACKEND
from .measure import ChargeMeasure, PushforwardMeasure, pushforward
from .retarded import OnMatterError, RetardedSolveError, retarded_state, retarded_time
from .scene import GridSpec, Scene, SceneError, load_scene

__all__ = [
    "BACKEND", "BumpTestFunction", "ChargeMeasure", "ExprDomainError", "FieldSample",
    "FlowModel", "FundamentalFields", "FundamentalJacobian", "GridSpec", "Jet3",
    "OnMatterError", "OutsideSupportError", "ParseError", "PushforwardMeasure",
    "ResidualReport", "RetardedSolveError", "Scene", "SceneError", "SupportRegion",
    "analytic_jacobian", "dalembertian", "eval_fundamentals", "eval_jet3", "faraday_tensor",
    "fd_jacobian", "fields_feynman", "fields_from_potentials_fd", "gauge_residual",
    "gravity_fields", "identity_defects", "kinematics", "load_scene", "parse_expr",
    "potentials", "pushforward", "residuals", "retarded_state", "retarded_time",
    "uz_field", "validate_flow", "weak_derivative_pairing",
]
