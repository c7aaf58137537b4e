from .cells import (
    LstmCellParams,
    PhasedCellParams,
    lstm_step,
    phased_step,
    time_gate,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ModelParams,
    backward,
    encode_context,
    init_params,
    loss_and_grads,
    output_head,
    predict,
)
from .optim import NadamState, nadam_update
