"""Graph contrastive learning with a learned, per-graph choice of
augmentation pair, trained by alternating bi-level optimisation."""
from gpa.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
