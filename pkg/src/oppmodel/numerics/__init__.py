from .metrics import accuracy, confusion_matrix, per_class_recall
from .mlp import (
    AdamState,
    MlpParams,
    TrainConfig,
    adam_step,
    init_params,
    load_params,
    mlp_backward,
    mlp_forward,
    predict,
    save_params,
    softmax_xent,
    train_classifier,
)
from .pca import PcaModel, pca_fit, pca_project
from .truncgauss import (
    SIGMA_MIN,
    TruncGaussParams,
    norm_cdf,
    norm_ppf,
    tg_cdf,
    tg_log_pdf,
    tg_logpdf_grad,
    tg_mle,
    tg_pdf,
    tg_quantile,
    tg_sample,
)

__all__ = [
    "AdamState", "MlpParams", "PcaModel", "SIGMA_MIN", "TrainConfig", "TruncGaussParams",
    "accuracy", "adam_step", "confusion_matrix", "init_params", "load_params",
    "mlp_backward", "mlp_forward", "norm_cdf", "norm_ppf", "pca_fit", "pca_project",
    "per_class_recall", "predict", "save_params", "softmax_xent", "tg_cdf", "tg_log_pdf",
    "tg_logpdf_grad", "tg_mle", "tg_pdf", "tg_quantile", "tg_sample", "train_classifier",
]
