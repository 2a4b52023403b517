"""Explain manifold embedding coordinates as sparse compositions of dictionary functions.

Stages: neighborhood graph and Laplacian (:mod:`graph`), spectral embedding
(:mod:`embedding`), tangent frames and metrics (:mod:`tangent`), pulled-back
coordinate gradients (:mod:`pullback`), dictionary gradients
(:mod:`dictionary`), the functional group lasso (:mod:`flasso`) and recovery
diagnostics (:mod:`diagnostics`). :mod:`pipeline` chains them.
"""

from .diagnostics import check_recovery_conditions, incoherence, internal_colinearity
from .dictionary import Dictionary, dictionary_from_config, make_function
from .embedding import Embedding, spectral_embed
from .errors import (ConvergenceError, InputFileError, ManifoldLassoError, NumericalError,
                     ValidationError)
from .flasso import LassoProblem, lambda_max, regularization_path, select_support, solve
from .graph import PointCloud, build_laplacian, build_neighbor_graph
from .pipeline import PipelineConfig, run_pipeline
from .pullback import estimate_coordinate_gradients
from .tangent import estimate_metrics, estimate_tangent_frames

__version__ = "0.1.0"
