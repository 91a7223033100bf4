"""Open-set identification on precomputed face embeddings.

Neural adapter ensembles trained with the maximal-entropy loss on gallery
embeddings plus mix-up negatives, multi-class and cosine baselines, and
O-ROC evaluation.
"""
from .augment import AugmentConfig, NegativeSet, generate as make_negatives, omu_neighbor
from .kernels import BACKEND
from .losses import NEGATIVE, cel_loss, eos_loss, margin_softmax, mel_loss
from .metrics import (OROCCurve, calibrate_threshold, compute_oroc, export_curve, rank1,
                      tpir_at_fpir)
from .models import (Ensemble, NanModel, ScoreTable, identify, load_model, make_partitions,
                     save_model, score_cos, score_ensemble, score_nan, train_ensemble, train_nan)
from .nn import DenseNet, TrainConfig, init_net
from .store import UNKNOWN, Gallery, ProbeSet, l2_normalize, load_embeddings, save_embeddings
from .synth import SynthSpec, generate as synthesize

__version__ = "0.1.0"
