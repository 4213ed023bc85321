# *** imports

# ** core
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .checkpoint import Checkpoint, CheckpointStore
from .config import TrainConfig
from .mask import PRECISION_THRESHOLDS, SegmentationMetrics
from .model import FanModel
from .optim import AdamOptimizer, LearningRateSchedule
from .params import SeedStreams
from .synthetic import ImageSample
from .text import Vocabulary


# *** constants

# ** constant: metrics_file
METRICS_FILE = 'metrics.jsonl'

# ** constant: best_checkpoint
BEST_CHECKPOINT = 'best.ckpt'

# ** constant: last_checkpoint
LAST_CHECKPOINT = 'last.ckpt'


# *** models

# ** model: evaluation_report
@dataclass
class EvaluationReport:
    '''
    Segmentation metrics over one split.
    '''

    split: str
    samples: int
    mean_iou: float
    overall_iou: float
    precision: Dict[float, float] = field(default_factory=dict)

    # * method: from_masks (static)
    @staticmethod
    def from_masks(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], split: str = 'val') -> 'EvaluationReport':
        summary = SegmentationMetrics.summarize(preds, gts)
        return EvaluationReport(
            split=split,
            samples=summary['samples'],
            mean_iou=summary['mean_iou'],
            overall_iou=summary['overall_iou'],
            precision={t: summary[f'precision@{t}'] for t in PRECISION_THRESHOLDS},
        )

    # * method: to_dict
    def to_dict(self) -> Dict[str, Any]:
        record = {
            'split': self.split,
            'samples': self.samples,
            'mean_iou': self.mean_iou,
            'overall_iou': self.overall_iou,
        }
        record.update({f'precision@{t}': value for t, value in self.precision.items()})
        return record

    # * method: format
    def format(self) -> str:
        lines = [
            f'split: {self.split} ({self.samples} samples)',
            f'mean IoU: {self.mean_iou:.4f}',
            f'overall IoU: {self.overall_iou:.4f}',
        ]
        lines.extend(f'P@{t}: {value:.4f}' for t, value in self.precision.items())
        return '\n'.join(lines)


# *** utils

# ** util: trainer
class Trainer:
    '''
    Mini-batch Adam training of a FanModel with step-decay learning rates,
    gradient clipping, per-epoch evaluation, metrics logging and checkpoints.
    '''

    # * init
    def __init__(
            self,
            config: TrainConfig,
            vocab: Vocabulary,
            output_dir: Optional[Path] = None,
            model: Optional[FanModel] = None,
        ):
        '''
        :param config: The training config.
        :type config: TrainConfig
        :param vocab: The dataset vocabulary.
        :type vocab: Vocabulary
        :param output_dir: Where metrics and checkpoints go; None keeps everything in memory.
        :type output_dir: Path
        :param model: An existing model to continue from.
        :type model: FanModel
        '''

        self.config = config.validate()
        self.model = model or FanModel(config.model, vocab, seed=config.seed)
        self.optimizer = AdamOptimizer(self.model.params, config.adam_beta1, config.adam_beta2, config.adam_eps)
        self.output_dir = Path(output_dir) if output_dir else None
        self.logger = logging.getLogger('fan.trainer')
        self.step_losses: List[float] = []
        self.history: List[Dict[str, Any]] = []
        self.best_iou = -1.0

    # * method: train_step
    def train_step(self, batch: Sequence[ImageSample], epoch: int) -> Dict[str, float]:
        '''
        One optimizer step on the batch-mean loss.

        :param batch: The batch samples.
        :type batch: Sequence[ImageSample]
        :param epoch: The current epoch (selects the learning rate).
        :type epoch: int
        :return: Batch-mean loss terms and the pre-clip gradient norm.
        :rtype: Dict[str, float]
        '''

        config = self.config
        params = self.model.params
        params.zero_grad()

        totals = {'loss': 0.0, 'bce': 0.0, 'dice': 0.0}
        weight = 1.0 / len(batch)
        for sample in batch:
            result = self.model.loss(
                sample.pixels, sample.tokens, sample.gt_mask,
                config.bce_weight, config.dice_weight, config.dice_smooth,
            )
            (result.total * weight).backward()
            totals['loss'] += result.total.item() * weight
            totals['bce'] += result.bce.item() * weight
            totals['dice'] += result.dice.item() * weight

        if not math.isfinite(totals['loss']):
            self.logger.warning('Loss diverged at step %d (epoch %d).', self.optimizer.steps + 1, epoch)
            RaiseError.execute(
                error_code='TRAINING_DIVERGED',
                step=self.optimizer.steps + 1,
                epoch=epoch,
            )

        totals['grad_norm'] = LearningRateSchedule.clip_gradients(params, config.clip_norm)
        self.optimizer.step(lambda name: LearningRateSchedule.lr_at(epoch, config, params.is_backbone(name)))
        self.step_losses.append(totals['loss'])
        return totals

    # * method: evaluate
    def evaluate(self, samples: Sequence[ImageSample], split: str = 'val', threshold: Optional[float] = None) -> EvaluationReport:
        '''
        Full-resolution evaluation: upsample logits, then binarize.
        '''

        threshold = self.config.threshold if threshold is None else threshold
        preds = [self.model.predict_mask(s.pixels, s.tokens, threshold) for s in samples]
        return EvaluationReport.from_masks(preds, [s.gt_mask for s in samples], split)

    # * method: save
    def save(self, name: str, epoch: int, metrics: Dict[str, Any]) -> Optional[Path]:
        if self.output_dir is None:
            return None
        checkpoint = Checkpoint.from_model(self.model, self.optimizer, epoch, metrics)
        return CheckpointStore.save(checkpoint, self.output_dir / name)

    # * method: record
    def record(self, entry: Dict[str, Any]) -> None:
        self.history.append(entry)
        if self.output_dir is None:
            return
        self.output_dir.mkdir(parents=True, exist_ok=True)
        with open(self.output_dir / METRICS_FILE, 'a', encoding='utf-8') as handle:
            handle.write(json.dumps(entry, sort_keys=True) + '\n')

    # * method: fit
    def fit(
            self,
            train: Sequence[ImageSample],
            val: Optional[Sequence[ImageSample]] = None,
        ) -> List[Dict[str, Any]]:
        '''
        Train for the configured epochs (or until max_steps), evaluating after
        every epoch on val (the training samples when no val split is given).

        :param train: The training samples.
        :type train: Sequence[ImageSample]
        :param val: The validation samples.
        :type val: Sequence[ImageSample]
        :return: One metrics record per epoch.
        :rtype: List[Dict[str, Any]]
        '''

        config = self.config
        train = list(train[:config.train_limit] if config.train_limit else train)
        if not train:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file='train split',
                reason='no training samples',
            )
        val_split, val = ('val', list(val)) if val else ('train', train)

        # Each fit starts a fresh metrics log.
        if self.output_dir is not None:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            (self.output_dir / METRICS_FILE).write_text('', encoding='utf-8')

        for epoch in range(config.epochs):
            # Deterministic per-epoch shuffle.
            order = SeedStreams.rng(config.seed, f'shuffle/{epoch}').permutation(len(train))
            epoch_losses = []
            for start in range(0, len(order), config.batch_size):
                if config.max_steps and self.optimizer.steps >= config.max_steps:
                    break
                batch = [train[i] for i in order[start:start + config.batch_size]]
                epoch_losses.append(self.train_step(batch, epoch)['loss'])
            if not epoch_losses:
                break

            report = self.evaluate(val, val_split)
            entry = {
                'epoch': epoch,
                'step': self.optimizer.steps,
                'train_loss': float(np.mean(epoch_losses)),
                'lr': LearningRateSchedule.lr_at(epoch, config, False),
                val_split: report.to_dict(),
            }
            self.record(entry)
            self.logger.info(
                'epoch %d step %d loss %.4f %s mIoU %.4f',
                epoch, self.optimizer.steps, entry['train_loss'], val_split, report.mean_iou,
            )

            self.save(LAST_CHECKPOINT, epoch, entry)
            if report.mean_iou > self.best_iou:
                self.best_iou = report.mean_iou
                self.save(BEST_CHECKPOINT, epoch, entry)

        return self.history
