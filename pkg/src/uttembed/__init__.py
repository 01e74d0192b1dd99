"""Utterance-level speaker/language embedding toolkit.

End-to-end pipeline on a small reverse-mode autodiff core: filterbank
features -> residual CNN frontend -> learnable pooling (mean / attentive /
dictionary) -> fixed-size embedding, trained with softmax, center or
angular-margin objectives and evaluated with verification/identification
metrics (EER, minimum detection cost, average language-detection cost,
top-k accuracy).
"""

from .autograd import GradTape, ShapeError, Tensor, no_grad

__version__ = "0.1.0"

__all__ = ["Tensor", "GradTape", "ShapeError", "no_grad", "__version__"]
