"""Feature-mimicry toolkit: craft images whose internal network features
imitate a chosen target, then measure how well they fool verification
systems and how visible the manipulation is."""

from featmimic.network import (
    Conv2d,
    Dense,
    Flatten,
    MaxPool2d,
    NetworkSpec,
    NonFiniteError,
    Relu,
    Softmax,
    Tap,
    classify,
    features,
    forward,
    grad_input,
    loss_euclidean,
)
from featmimic.attack import (
    AttackConfig,
    AttackOutcome,
    MimicPredicate,
    ZeroGradientError,
    lots_direction,
    lots_iterative,
    lots_single,
    one_hot_target,
)
from featmimic.quality import (
    EccConfig,
    EccResult,
    PassResult,
    ecc_align,
    pass_score,
    perturbation_norms,
    ssim,
    to_grayscale,
)
from featmimic.verification import (
    GalleryTemplate,
    RocCurve,
    distance,
    enroll,
    roc,
    score_all,
    threshold_at_far,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackOutcome",
    "Conv2d",
    "Dense",
    "EccConfig",
    "EccResult",
    "Flatten",
    "GalleryTemplate",
    "MaxPool2d",
    "MimicPredicate",
    "NetworkSpec",
    "NonFiniteError",
    "PassResult",
    "Relu",
    "RocCurve",
    "Softmax",
    "Tap",
    "ZeroGradientError",
    "classify",
    "distance",
    "ecc_align",
    "enroll",
    "features",
    "forward",
    "grad_input",
    "lots_direction",
    "lots_iterative",
    "lots_single",
    "loss_euclidean",
    "one_hot_target",
    "pass_score",
    "perturbation_norms",
    "roc",
    "score_all",
    "ssim",
    "threshold_at_far",
    "to_grayscale",
    "verify",
]
