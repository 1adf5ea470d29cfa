"""Tactile-image pipeline: rasterization, dense optical flow, augmentation,
synthetic gesture data, and sequence classification."""

from .augment import (AugmentConfig, AugmentedFrame, augment_frame,
                      flow_to_polar, process_sample_frames, process_sequence)
from .classify import (AUGMENTED, RAW, ClassifierModel, EvalReport,
                       FeatureConfig, TrainConfig, cell_means,
                       cross_entropy_loss_and_grad, evaluate, extract_features,
                       predict, run_experiment, sequence_cell_means, sweep_L,
                       train, train_on_features)
from .dataset import (CLASS_NAMES, Dataset, GestureClass, GestureSample,
                      Split, UserStyle, first_window, load_dataset,
                      save_dataset, sliding_windows, split_dataset,
                      synth_dataset, synth_sample)
from .errors import ConfigError, DataError, NumericError, TactiflowError
from .flow import (FlowConfig, FlowField, PolyExpansion, farneback_flow,
                   flow_from_expansions, flow_single_level, poly_expand,
                   pyramid_expansions)
from .raster import (RasterConfig, TactileImage, TaxelFrame, TaxelLayout,
                     default_layout, normalize_frame, rasterize)

__version__ = "0.1.0"
