"""Linear echo state networks in the eigenbasis of the reservoir."""

from .dpg import build_dpg, dpg_spectrum, random_eigenvectors, real_count
from .esn import (DenseReservoir, ESNConfig, ESNError, Readout, TaskDataset, apply_leak,
                  fit_readout, generate_dense, predict, run_reservoir, spectral_radius,
                  train_ridge)
from .postponed import recover_state, run_echo_matrix, scan_input_scalings, train_gamma
from .scan import batch_powers, scan_states
from .spectral import (NearDefectiveError, SpectralReservoir, diagonalize, eet_train,
                       ewt_transform, run_diagonal)

__version__ = "0.1.0"
