"""Autoregressive spectral U-Net operator for 2-D vorticity rollout.

Library layout:

- ``autodiff``: dense-tensor reverse-mode engine over the needed op set
- ``spectral``: real 2-D FFT contracts, truncated spectral convolution,
  spectral zero-pad resampling
- ``model``: the spectral U-Net operator, the direct-prediction spectral
  baseline, checkpoints, parameter accounting
- ``train``: relative-L2 objectives, two-step consistency penalty, AdamW,
  one-cycle schedule, epoch loop
- ``simulate``: pseudo-spectral vorticity-form Navier-Stokes data generator
- ``evaluate``: rollout metrics, blow-up accounting, perturbation and drift
  diagnostics, resolution transfer
- ``bench``: latency/throughput harness with a fixed CSV schema
- ``cli``: the ``specunet`` command-line pipeline
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    FNOBaseline,
    ModelConfig,
    PersistenceModel,
    SpectralUNet,
    build_model,
    count_parameters,
    load_model,
    save_checkpoint,
)
from .simulate import SolverConfig, TrajectoryDataset, generate_dataset  # noqa: F401
from .train import TrainConfig, train_epochs  # noqa: F401
