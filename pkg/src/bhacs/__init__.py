"""Biharmonic almost complex structures on the flat 4-torus."""
from .geometry import Grid, MetricField, TwoFormField
from .acs import J0, CompatibleJField, validate, tangent_project, retract_cayley, project_polar

__all__ = [
    "Grid", "MetricField", "TwoFormField", "J0", "CompatibleJField",
    "validate", "tangent_project", "retract_cayley", "project_polar",
]
