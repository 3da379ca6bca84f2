"""Backprop-free layer-wise training with kernelized bottleneck objectives.

Each hidden layer minimizes its own pairwise kernel objective; the updates
have a 3-factor Hebbian form (pre- and post-synaptic activity times a
pair-specific modulator built from a binary teaching signal and the layer's
own activity similarity).  Includes batch and streaming trainers, a
backprop baseline, dataset loaders, and an experiment CLI.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    DimensionError,
    KernelError,
    PhsicError,
    StateError,
)
from .kernels import (
    GroupingSpec,
    KernelFamily,
    KernelMatrix,
    KernelSpec,
    hsic_estimate,
    kernel_eval,
    kernel_matrix,
    label_kernel,
    label_kernel_matrix,
    label_kernel_unbalanced,
    phsic_estimate,
)
from .network import (
    LayerState,
    Network,
    NetworkConfig,
    ReadoutState,
    group_response,
    lrelu,
    lrelu_deriv,
    readout_forward,
    softmax_cross_entropy,
)
from .numerics import init_weights, make_rng, matmul
from .online import (
    CircuitConfig,
    OnlineCircuitState,
    PairwiseStreamTrainer,
    SampleView,
    StreamMode,
    memory_ode_step,
    online_update_step,
    smoothing_kernel,
    temporal_difference,
    third_factor_stream,
)
from .rules import (
    ThirdFactor,
    UpdateConfig,
    backprop_gradients,
    finite_difference_gradient,
    layer_gradient,
    objective_value,
    two_point_update,
)
from .trainer import (
    MetricsRecord,
    OptimizerState,
    TrainerConfig,
    evaluate,
    lr_at_epoch,
    run_training,
    sgd_step,
    train_batch,
    train_epoch,
)

__version__ = "0.1.0"
