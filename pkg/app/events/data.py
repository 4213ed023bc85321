# *** imports

# ** core
import dataclasses
import logging
from pathlib import Path

# ** app
from .settings import CliEvent
from ..utils import DatasetStore, GenerationConfig, RunManifest, SceneGenerator


# *** constants

# ** constant: run_manifest_file
RUN_MANIFEST_FILE = 'run.json'


# *** events

# ** event: generate_dataset
class GenerateDataset(CliEvent):
    '''
    A domain event to generate the synthetic referring-segmentation dataset:
    one self-contained directory per split, each with images, masks, a
    manifest and the vocabulary.
    '''

    # * method: execute
    def execute(self,
            out: str,
            train: str = '512',
            val: str = '64',
            test: str = '64',
            size: str = '64',
            seed: str = '0',
            **kwargs,
        ) -> str:
        '''
        Generate and write the train, val and test splits.

        :param out: The output directory.
        :type out: str
        :param train: The number of training samples.
        :type train: str
        :param val: The number of validation samples.
        :type val: str
        :param test: The number of test samples.
        :type test: str
        :param size: The square image size (a multiple of 32).
        :type size: str
        :param seed: The root seed.
        :type seed: str
        :param kwargs: Additional keyword arguments.
        :type kwargs: dict
        :return: A summary of the written splits.
        :rtype: str
        '''

        logger = logging.getLogger('fan.data')

        # Convert the arguments.
        counts = {
            'train': self.parse_int('train', train, 0),
            'val': self.parse_int('val', val, 0),
            'test': self.parse_int('test', test, 0),
        }
        seed = self.parse_int('seed', seed, 0) or 0
        config = GenerationConfig(image_size=self.parse_int('size', size, 32)).validate()
        self.verify(
            any(counts.values()),
            'INVALID_ARGUMENT',
            'At least one split must have samples.',
            argument='train/val/test',
            value=0,
            reason='at least one split must have samples',
        )

        # Record the run before generating anything.
        root = Path(out)
        manifest = RunManifest(
            command='gen-data',
            config_path=None,
            config=dict(dataclasses.asdict(config), **counts),
            seed=seed,
            output_dir=str(root),
        )
        manifest.write(root / RUN_MANIFEST_FILE)

        # Generate each split with the shared template vocabulary.
        vocab = SceneGenerator.build_vocabulary()
        lines = [f'Dataset: {root}', f'Image size: {config.image_size}', f'Vocabulary: {len(vocab)} tokens']
        for split, count in counts.items():
            if not count:
                continue
            samples = DatasetStore.generate_split(split, count, seed, config, vocab)
            DatasetStore.write_dataset(samples, root / split, vocab)
            logger.info('Wrote %d %s samples to %s', count, split, root / split)
            lines.append(f'{split}: {count} samples')

        manifest.finish(root / RUN_MANIFEST_FILE)
        return '\n'.join(lines)
