"""Disclosure risk estimation for sample frequency tables."""

__version__ = "0.1.0"

from .tables import (Attribute, FreqTable, Microdata, TableSchema, ingest_microdata, margin,
                     sample_uniques)
from .countmodels import (NBLaw, PoissonPosterior, nb_pmf, poisson_e_inv, poisson_p_unique,
                          sample_posterior_F_given_f1)
from .risk import CellRisk, RiskEstimate
from .argus import PostStrataSpec, WeightedSample, argus_cell_risk, argus_estimate, compute_weights, fhat
from .loglinear import LoglinFit, fit_independence, fit_two_way, loglin_estimate
from .smoothing import (LocalFit, NeighborhoodSpec, NewtonOptions, design_row, local_mle,
                        neighborhood, smooth_estimate)
from .synth import (IndependenceLaw, MixtureLaw, PopulationSpec, SmoothLaw, TruthReport,
                    draw_sample, gen_population, true_risk)

__all__ = [
    "Attribute", "FreqTable", "Microdata", "TableSchema", "ingest_microdata", "margin",
    "sample_uniques", "NBLaw", "PoissonPosterior", "nb_pmf", "poisson_e_inv", "poisson_p_unique",
    "sample_posterior_F_given_f1", "CellRisk", "RiskEstimate", "PostStrataSpec", "WeightedSample",
    "argus_cell_risk", "argus_estimate", "compute_weights", "fhat", "LoglinFit",
    "fit_independence", "fit_two_way", "loglin_estimate", "LocalFit", "NeighborhoodSpec",
    "NewtonOptions", "design_row", "local_mle", "neighborhood", "smooth_estimate",
    "IndependenceLaw", "MixtureLaw", "PopulationSpec", "SmoothLaw", "TruthReport",
    "draw_sample", "gen_population", "true_risk",
]
