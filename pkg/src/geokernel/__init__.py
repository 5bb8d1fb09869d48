"""Interacting-agent dynamics on manifolds and nonparametric kernel learning."""
