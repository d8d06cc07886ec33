"""Nonseparable multivariate space-time CAR models for areal count panels."""

__version__ = "0.1.0"

from .covariance import (
    Ar1Spec,
    SigmaEtaFactor,
    SpectralLatents,
    ar1_cholesky,
    ar1_correlation,
    assemble_sigma_eta,
    eta_to_v,
    icar_pairwise_quadratic,
    sample_mstcar_prior,
    sigma_eta_dense,
    sigma_eta_solve,
    z_to_eta,
)
from .graph import GraphSpectrum, SpatialGraph, graph_spectrum, lattice_graph, load_adjacency
from .panel import CountPanel, PanelIndex, load_count_panel
from .rng import RngStream
from .sampler import ChainConfig, HyperParams, ModelState, init_state, run_chain
from .store import SampleStore

__all__ = [
    "Ar1Spec",
    "ChainConfig",
    "CountPanel",
    "GraphSpectrum",
    "HyperParams",
    "ModelState",
    "PanelIndex",
    "RngStream",
    "SampleStore",
    "SigmaEtaFactor",
    "SpatialGraph",
    "SpectralLatents",
    "ar1_cholesky",
    "ar1_correlation",
    "assemble_sigma_eta",
    "eta_to_v",
    "graph_spectrum",
    "icar_pairwise_quadratic",
    "init_state",
    "lattice_graph",
    "load_adjacency",
    "load_count_panel",
    "run_chain",
    "sample_mstcar_prior",
    "sigma_eta_dense",
    "sigma_eta_solve",
    "z_to_eta",
]
