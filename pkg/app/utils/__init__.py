"""Fully Aligned Network — Utility Exports"""

# *** exports

# ** app
from .tensor import Tensor, ComputationRecord, TensorOps, TensorOps as Ops
from .params import ParameterStore, ParamScope, SeedStreams
from .attention import AttentionProbe, MultiHeadAttention, MultiHeadAttention as MHA
from .layers import TransformerLayers, TransformerLayers as Layers
from .config import ModelConfig, TrainConfig, RunManifest, ConfigLoader, ConfigLoader as Config
from .text import Vocabulary, TokenSequence, TextFeatures, TextEncoder
from .vision import PyramidFeatures, VisionEncoder
from .activation import ActivatedPyramid, ActivationModule
from .v2l import AlignedVisualMap, V2LDecoder
from .l2v import UpdatedSentenceEmbedding, L2VDecoder
from .mask import MaskHead, SegmentationMetrics, SegmentationMetrics as Metrics
from .model import FanModel
from .gradcheck import GradCheckReport, GradientChecker
from .gradsuite import GradCheckSuites
from .netpbm import NetpbmCodec, NetpbmCodec as Netpbm
from .synthetic import SceneObject, SceneSpec, GenerationConfig, ImageSample, SceneGenerator, SceneQuery
from .dataset import DatasetStore
from .optim import AdamOptimizer, LearningRateSchedule
from .checkpoint import Checkpoint, CheckpointStore
from .trainer import Trainer, EvaluationReport
