from .models import (
    ARCH_IDS,
    ArchConfig,
    ParamSet,
    anet_forward,
    init_params,
    param_layout,
    snet_forward,
    vnet_forward,
)
from .ops import (
    broadcast_atmosphere,
    channel_shuffle,
    sdw_conv,
    shuffle_index,
    shuffle_unit_add,
    shuffle_unit_cat,
    spp,
)
from .checkpoint import checkpoint_bytes, load_checkpoint, read_header, save_checkpoint
