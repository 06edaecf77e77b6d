"""Single-cell hepatitis B virus replication model with LHS-PRCC sensitivity analysis."""

__version__ = "0.1.0"
