# *** imports

# ** core
import math
from typing import Dict, Sequence

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .params import ParamScope
from .tensor import Tensor, TensorOps


# *** constants

# ** constant: default_threshold
DEFAULT_THRESHOLD = 0.35

# ** constant: logit_stride
LOGIT_STRIDE = 4

# ** constant: precision_thresholds
PRECISION_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


# *** utils

# ** util: mask_head
class MaskHead:
    '''
    Similarity mask head plus the segmentation losses. Inference order is
    logits → bilinear upsample → sigmoid → threshold.
    '''

    # * method: declare (static)
    @staticmethod
    def declare(scope: ParamScope) -> None:
        scope.create('bias', (1,), init='zeros')

    # * method: similarity_mask (static)
    @staticmethod
    def similarity_mask(visual: Tensor, sentence: Tensor, scope: ParamScope) -> Tensor:
        '''
        Per-pixel scaled dot product against the sentence vector plus a
        learned scalar bias, as one matrix multiplication.

        :param visual: The aligned map [h×w×D].
        :type visual: Tensor
        :param sentence: The sentence query [1×D].
        :type sentence: Tensor
        :param scope: The head parameters.
        :type scope: ParamScope
        :return: Stride-4 logits [h×w].
        :rtype: Tensor
        '''

        if visual.ndim != 3 or sentence.shape != (1, visual.shape[2]):
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='similarity_mask',
                left=f'visual {visual.shape}',
                right=f'sentence {sentence.shape}',
            )

        h, w, dim = visual.shape
        scores = visual.reshape(h * w, dim) @ sentence.transpose()
        logits = scores * (1.0 / math.sqrt(dim)) + scope['bias']
        return logits.reshape(h, w)

    # * method: upsample_logits (static)
    @staticmethod
    def upsample_logits(logits: Tensor, height: int, width: int) -> Tensor:
        '''
        Bilinearly upsample stride-4 logits to the full image size.
        '''

        h, w = logits.shape if logits.ndim == 2 else (-1, -1)
        if height != LOGIT_STRIDE * h or width != LOGIT_STRIDE * w:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='upsample_logits',
                left=f'logits {logits.shape}',
                right=f'target {height}x{width}',
            )
        upsampled = TensorOps.bilinear_upsample(logits.reshape(h, w, 1), height, width)
        return upsampled.reshape(height, width)

    # * method: sigmoid (static)
    @staticmethod
    def sigmoid(logits) -> np.ndarray:
        values = logits.data if isinstance(logits, Tensor) else logits
        return TensorOps.stable_sigmoid(values)

    # * method: check_threshold (static)
    @staticmethod
    def check_threshold(threshold: float) -> float:
        if not 0.0 < threshold < 1.0:
            RaiseError.execute(
                error_code='INVALID_THRESHOLD',
                threshold=threshold,
            )
        return float(threshold)

    # * method: threshold_probabilities (static)
    @staticmethod
    def threshold_probabilities(probabilities: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
        '''
        Foreground where probability ≥ threshold.
        '''

        threshold = MaskHead.check_threshold(threshold)
        return np.asarray(probabilities, dtype=np.float64) >= threshold

    # * method: binarize (static)
    @staticmethod
    def binarize(logits, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
        '''
        Threshold sigmoid(logits) into a boolean mask.

        :param logits: Full-resolution logits (Tensor or array).
        :type logits: Tensor | np.ndarray
        :param threshold: The probability threshold in (0, 1).
        :type threshold: float
        :return: The binary mask.
        :rtype: np.ndarray
        '''

        MaskHead.check_threshold(threshold)
        return MaskHead.threshold_probabilities(MaskHead.sigmoid(logits), threshold)

    # * method: check_target (static)
    @staticmethod
    def check_target(logits: Tensor, target: np.ndarray, operation: str) -> np.ndarray:
        target = np.asarray(target, dtype=np.float64)
        if target.shape != logits.shape:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation=operation,
                left=f'logits {logits.shape}',
                right=f'target {target.shape}',
            )
        if not np.isin(target, (0.0, 1.0)).all():
            RaiseError.execute(
                error_code='DATA_ERROR',
                file='target mask',
                reason=f'{operation} needs a binary target with values in {{0, 1}}',
            )
        return target

    # * method: bce_loss (static)
    @staticmethod
    def bce_loss(logits: Tensor, target: np.ndarray) -> Tensor:
        '''
        Mean per-pixel binary cross-entropy (log-sum-exp form).
        '''

        target = MaskHead.check_target(logits, target, 'bce_loss')
        return TensorOps.bce_with_logits(logits, target)

    # * method: dice_loss (static)
    @staticmethod
    def dice_loss(logits: Tensor, target: np.ndarray, smooth: float = 1.0) -> Tensor:
        '''
        1 − (2·Σ(p·y) + smooth) / (Σp + Σy + smooth) with p = sigmoid(logits).
        '''

        target = MaskHead.check_target(logits, target, 'dice_loss')
        probs = TensorOps.sigmoid(logits)
        overlap = (probs * Tensor(target)).sum()
        return 1.0 - (overlap * 2.0 + smooth) / (probs.sum() + (float(target.sum()) + smooth))

    # * method: downsample_mask (static)
    @staticmethod
    def downsample_mask(mask: np.ndarray, factor: int = LOGIT_STRIDE) -> np.ndarray:
        '''
        Nearest-neighbor subsample at the centre offset of each factor×factor cell.
        '''

        mask = np.asarray(mask)
        if mask.ndim != 2 or mask.shape[0] % factor or mask.shape[1] % factor:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='downsample_mask',
                left=str(mask.shape),
                right=f'multiples of {factor}',
            )
        offset = factor // 2
        return mask[offset::factor, offset::factor].astype(np.float64)


# ** util: segmentation_metrics
class SegmentationMetrics:
    '''
    IoU, overall IoU and Precision@X over binary masks.
    '''

    # * method: counts (static)
    @staticmethod
    def counts(pred: np.ndarray, gt: np.ndarray) -> tuple:
        pred = np.asarray(pred, dtype=bool)
        gt = np.asarray(gt, dtype=bool)
        if pred.shape != gt.shape:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='iou',
                left=f'prediction {pred.shape}',
                right=f'ground truth {gt.shape}',
            )
        return int(np.logical_and(pred, gt).sum()), int(np.logical_or(pred, gt).sum())

    # * method: iou (static)
    @staticmethod
    def iou(pred: np.ndarray, gt: np.ndarray) -> float:
        '''
        Intersection over union; 1.0 when both masks are empty.
        '''

        intersection, union = SegmentationMetrics.counts(pred, gt)
        return 1.0 if union == 0 else intersection / union

    # * method: precision_at (static)
    @staticmethod
    def precision_at(ious: Sequence[float], threshold: float) -> float:
        '''
        Fraction of samples with IoU ≥ threshold.
        '''

        if len(ious) == 0:
            RaiseError.execute(
                error_code='CONTRACT_VIOLATION',
                operation='precision_at',
                reason='needs at least one IoU',
            )
        if not 0.0 < threshold < 1.0:
            RaiseError.execute(
                error_code='INVALID_THRESHOLD',
                threshold=threshold,
            )
        hits = sum(1 for value in ious if value >= threshold)
        return hits / len(ious)

    # * method: overall_iou (static)
    @staticmethod
    def overall_iou(intersections: Sequence[int], unions: Sequence[int]) -> float:
        '''
        Cumulative intersection over cumulative union across samples.
        '''

        union = sum(unions)
        return 1.0 if union == 0 else sum(intersections) / union

    # * method: summarize (static)
    @staticmethod
    def summarize(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> Dict[str, float]:
        '''
        Aggregate paired masks into mean IoU, overall IoU and Precision@X.

        :param preds: Predicted masks.
        :type preds: Sequence[np.ndarray]
        :param gts: Ground-truth masks, paired by position.
        :type gts: Sequence[np.ndarray]
        :return: The metric record.
        :rtype: Dict[str, float]
        '''

        if len(preds) != len(gts):
            RaiseError.execute(
                error_code='CONTRACT_VIOLATION',
                operation='summarize',
                reason=f'{len(preds)} predictions for {len(gts)} ground truths',
            )

        ious, intersections, unions = [], [], []
        for pred, gt in zip(preds, gts):
            intersection, union = SegmentationMetrics.counts(pred, gt)
            intersections.append(intersection)
            unions.append(union)
            ious.append(1.0 if union == 0 else intersection / union)

        report = {
            'samples': len(ious),
            'mean_iou': float(np.mean(ious)) if ious else 0.0,
            'overall_iou': SegmentationMetrics.overall_iou(intersections, unions),
        }
        for threshold in PRECISION_THRESHOLDS:
            report[f'precision@{threshold}'] = SegmentationMetrics.precision_at(ious, threshold)
        return report
