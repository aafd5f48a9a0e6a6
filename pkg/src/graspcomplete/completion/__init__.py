from .estimator import ImplicitSurfaceEstimator
from .fit import (
    CompletionProblem,
    FitConfig,
    SurfaceClippedWarning,
    extract_mesh,
    fit,
    loss_and_gradients,
    loss_input_gradients,
    padded_domain,
    write_telemetry_csv,
)
from .model import ImplicitModel


def eval_f(model, x):
    return model.eval_f(x)


def grad_f(model, x):
    return model.grad_f(x)


__all__ = [
    "CompletionProblem",
    "FitConfig",
    "ImplicitModel",
    "ImplicitSurfaceEstimator",
    "SurfaceClippedWarning",
    "eval_f",
    "extract_mesh",
    "fit",
    "grad_f",
    "loss_and_gradients",
    "loss_input_gradients",
    "padded_domain",
    "write_telemetry_csv",
]
