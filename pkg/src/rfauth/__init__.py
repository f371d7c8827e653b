"""Open-set wireless transmitter authorization on fingerprinted IQ frames."""
from .dataset import (FrameNormalizer, LabeledDataset, SetPartition, SplitBundle, augment, class_weights, gather,
                      label_frames, make_splits, normalize_frame, partition_transmitters)
from .decision import (Decision, Hypothesis, RocCurve, ThresholdSpec, balanced_accuracy, classify_authorized,
                       decide, fit_threshold_disc, fit_threshold_ova, roc_curve)
from .estimator import OpenSetAuthorizer
from .experiment import ExperimentConfig, run_realization, sweep_authorized, sweep_known
from .models import (ExtractorConfig, HeadConfig, ScoreVector, TrainConfig, TrainedModel, build_model,
                     load_checkpoint, param_count, save_checkpoint, score, train)
from .simulate import (Corpus, ImpairmentRanges, IQFrame, SymbolFrame, TransmitterProfile, apply_fingerprint,
                       generate_corpus, make_reference_waveform, sample_profile, spread_profiles)

__version__ = "0.1.0"
