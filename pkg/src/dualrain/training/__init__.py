from .config import TrainConfig
from .data import Sample, iterate_batches, load_samples
from .labels import detect_rain_pixels, extract_atmosphere_label, luminance
from .losses import image_gradient, loss_anet, loss_snet, loss_total
from .optim import AdamState, adam_step
from .stages import (
    StageReport,
    TrainReport,
    atmosphere_labels,
    joint_train,
    pretrain_anet,
    pretrain_snet,
)
