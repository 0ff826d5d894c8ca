"""Hajek EDF estimation under finite-population ranked set sampling designs."""

from .designs import Design, DesignSpec, RankedSetSample, RankingMode, draw_rss, draw_srs_wor, feasibility_check
from .estimators import EdfEstimate, hajek_edf, median_ci, pointwise_ci, syg_variance_estimate, true_variance
from .inclusion import InclusionTable, inclusion_table, order_statistic_prob
from .population import DistributionKind, Population, attach_auxiliary, generate_grid_population, true_edf

__all__ = [
    "Design", "DesignSpec", "RankedSetSample", "RankingMode", "draw_rss", "draw_srs_wor", "feasibility_check",
    "EdfEstimate", "hajek_edf", "median_ci", "pointwise_ci", "syg_variance_estimate", "true_variance",
    "InclusionTable", "inclusion_table", "order_statistic_prob",
    "DistributionKind", "Population", "attach_auxiliary", "generate_grid_population", "true_edf",
]
__version__ = "0.1.0"
