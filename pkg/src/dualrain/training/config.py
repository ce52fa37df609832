from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import InvalidParams


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for the three training stages.

    Learning rates and loss weights default to the published values; epoch
    counts, batch size and patch size are desk-scale choices.
    """

    patch: int = 64
    batch: int = 8
    epochs_anet: int = 10
    epochs_snet: int = 10
    epochs_joint: int = 20
    lr_anet_pre: float = 1e-3
    lr_main: float = 1e-3
    lr_finetune: float = 1e-6
    lambda1: float = 0.01
    lambda2: float = 1.0
    eps: float = 0.05
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    flips: bool = False

    def __post_init__(self):
        if self.patch < 16 or self.patch % 4:
            raise InvalidParams(f"patch must be >= 16 and divisible by 4, got {self.patch}")
        if self.batch < 1:
            raise InvalidParams(f"batch must be >= 1, got {self.batch}")
        for name in ("epochs_anet", "epochs_snet", "epochs_joint"):
            if getattr(self, name) < 0:
                raise InvalidParams(f"{name} must be >= 0")
        for name in ("lr_anet_pre", "lr_main"):
            if not getattr(self, name) > 0:
                raise InvalidParams(f"{name} must be > 0")
        # 0 is allowed here and freezes the fine-tuned networks
        if not self.lr_finetune >= 0:
            raise InvalidParams("lr_finetune must be >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidParams("lambda1 and lambda2 must be >= 0")
        if not 0 < self.eps <= 0.5:
            raise InvalidParams(f"eps must be in (0, 0.5], got {self.eps}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_eps > 0):
            raise InvalidParams("invalid Adam hyperparameters")

    def to_dict(self) -> dict:
        return asdict(self)
