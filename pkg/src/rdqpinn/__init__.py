"""Hybrid quantum-classical physics-informed solver for reaction-diffusion systems."""

from .circuits import AnsatzSpec, ModelSpec, default_partition, model_output
from .embedding import (EmbeddingSpec, FnnEmbedding, NormalizationSpec,
                        QnnEmbedding, embed_with_jet, normalize)
from .errors import CheckpointError, ConfigurationError, IntegrationError
from .metrics import ErrorReport, compare
from .physics import (CollocationSet, InitialCondition, LossBreakdown,
                      RDParams, residuals, sample_collocation, total_loss)
from .reference import GridSolution, solve_reference
from .statevector import (Gate, ObservablePartition, StateVector, apply_gate,
                          expectation_zsum, zero_state)
from .train import PinnBaseline, TrainConfig, TrainHistory

__version__ = "0.1.0"
