"""Least-squares estimation of source parameters."""

from .lm import FitResult, MODEL_VERSION, levenberg_marquardt
from .characterization import (CharacterizationConstants, PowerSweepDataset,
                               fit_characterization, synthetic_power_sweep)
from .fringe import fit_fringe
from .lineshape import fit_auto_lineshape, fit_cross_lineshape, fit_lineshape, synthetic_histogram
