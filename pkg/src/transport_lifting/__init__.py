"""Convex lifted solver for branched transport and urban planning networks.

Modules
-------
model        measures, graphs, network cost functionals, exact W1
lift         boundary trace, lifted grid and the primal constraint set
constraints  Dykstra projection onto the dual constraint sets
solver       primal-dual saddle-point iteration
extract      image recovery, flux, jump network and image energies
oracle       brute-force topology enumeration with Steiner optimization
certificate  analytic dual lower bound for the line-to-line problem
cli          config driven runs and artifact output
"""
from .model import (BoundaryMeasure, BranchedTransport, ConfigurationError,
                    InfeasibleError, ParameterError, Scenario, SignedAtomMeasure,
                    TransportGraph, UrbanPlanning, divergence_residual, graph_cost,
                    graph_cost_branched, graph_cost_urban, make_model, wasserstein1)

__version__ = "0.1.0"
