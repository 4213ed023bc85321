# *** imports

# ** core
from pathlib import Path

# ** app
from .settings import CliEvent
from ..utils import CheckpointStore, Metrics, Netpbm


# *** events

# ** event: predict_mask
class PredictMask(CliEvent):
    '''
    A domain event to segment the object a referring expression describes
    in one image, writing the binary mask as a PGM file.
    '''

    # * method: execute
    def execute(self,
            checkpoint: str,
            image: str,
            text: str,
            out: str,
            gt: str = None,
            threshold: str = None,
            **kwargs,
        ) -> str:
        '''
        Predict a mask.

        :param checkpoint: The checkpoint file (it carries the vocabulary).
        :type checkpoint: str
        :param image: The input PPM image.
        :type image: str
        :param text: The referring expression; may be empty.
        :type text: str
        :param out: The output PGM path.
        :type out: str
        :param gt: Optional ground-truth PGM mask for an IoU report.
        :type gt: str
        :param threshold: Optional binarization threshold.
        :type threshold: str
        :param kwargs: Additional keyword arguments.
        :type kwargs: dict
        :return: The output path, foreground fraction and optional IoU.
        :rtype: str
        '''

        model = CheckpointStore.load(checkpoint).build_model()
        threshold = self.parse_float('threshold', threshold)

        # The network needs image sides that are multiples of 32.
        pixels = Netpbm.read_ppm(image)
        height, width = pixels.shape[:2]
        self.verify(
            height % 32 == 0 and width % 32 == 0,
            'DATA_ERROR',
            f'Image sides must be multiples of 32, got {height}x{width}.',
            file=image,
            reason=f'image sides must be multiples of 32, got {height}x{width}',
        )

        tokens = model.tokenize(text or '')
        if threshold is None:
            mask = model.predict_mask(pixels / 255.0, tokens)
        else:
            mask = model.predict_mask(pixels / 255.0, tokens, threshold)
        Netpbm.write_pgm(Path(out), mask)

        lines = [
            f'Mask: {out}',
            f'Tokens: {tokens.true_length}',
            f'Foreground: {float(mask.mean()):.4f}',
        ]

        # Score against a ground-truth mask when one is given.
        if gt:
            gt_mask = Netpbm.read_pgm(gt)
            lines.append(f'IoU: {Metrics.iou(mask, gt_mask):.4f}')
        return '\n'.join(lines)
