"""Graph convolutions as state-space recursions, and their nonlinear extensions."""

from .filters import (
    GcnnFilterParams,
    LssmFilterParams,
    RsnFilterParams,
    filter_forward,
    filter_vjp,
    gcnn_filter_direct,
    gcnn_filter_recursive,
    lssm_filter,
    rsn_filter,
)
from .graph import Graph, ShiftOperator, normalize_shift, sbm_generate
from .models import LayerSpec, Model, model_backward, model_forward, param_count

__version__ = "0.1.0"
