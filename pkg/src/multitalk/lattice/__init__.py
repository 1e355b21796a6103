from .ctc import CTCInfeasibleWarning, ctc_loss, min_frames
from .gradcheck import max_relative_error, numerical_gradient
from .objectives import LAMBDA_CTC, LAMBDA_MASK, heat_loss, mask_loss, reduce_losses, total_loss
from .pruned import (
    PruneBounds,
    gather_window,
    min_window,
    prune_bounds,
    pruned_rnnt_loss,
    trivial_join,
)
from .transducer import OccupancyGrid, occupancy, rnnt_loss

__all__ = [
    "CTCInfeasibleWarning",
    "LAMBDA_CTC",
    "LAMBDA_MASK",
    "OccupancyGrid",
    "PruneBounds",
    "ctc_loss",
    "gather_window",
    "heat_loss",
    "mask_loss",
    "max_relative_error",
    "numerical_gradient",
    "min_frames",
    "min_window",
    "occupancy",
    "prune_bounds",
    "pruned_rnnt_loss",
    "reduce_losses",
    "rnnt_loss",
    "total_loss",
    "trivial_join",
]
