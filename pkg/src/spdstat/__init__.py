"""Statistics on symmetric positive definite matrices."""

from .errors import *  # noqa: F401,F403
from .geometry import MetricKind, dist, group_act, riem_exp, riem_log
from .means import (
    KarcherConfig,
    geo_mean_pair,
    mean_canonical,
    mean_euclidean,
    mean_log_euclidean,
    riccati_solve,
)
from .symcore import (
    duplication_matrix,
    kron_diff,
    spd_inv,
    spd_log,
    spd_sqrt,
    sym_eig,
    sym_exp,
    vecd,
    vecd_inv,
)

__version__ = "0.1.0"
