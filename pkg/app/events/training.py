# *** imports

# ** core
import dataclasses
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

# ** app
from .settings import CliEvent
from ..utils import (
    CheckpointStore,
    ConfigLoader,
    DatasetStore,
    EvaluationReport,
    ImageSample,
    RunManifest,
    Trainer,
    TrainConfig,
    Vocabulary,
)
from ..utils.dataset import MANIFEST_FILE
from ..utils.mask import DEFAULT_THRESHOLD


# *** constants

# ** constant: run_manifest_file
RUN_MANIFEST_FILE = 'run.json'

# ** constant: ablation_file
ABLATION_FILE = 'ablation.jsonl'


# *** helpers

# ** helper: load_training_data
def load_training_data(data: str) -> Tuple[List[ImageSample], Optional[List[ImageSample]], Vocabulary]:
    '''
    Read the train split and, when present, the val split.
    '''

    train, vocab = DatasetStore.read_split(data, 'train')
    val = None
    if (Path(data) / 'val' / MANIFEST_FILE).is_file():
        val, _ = DatasetStore.read_split(data, 'val')
    return train, val, vocab


# ** helper: fit_to_data
def fit_to_data(config: TrainConfig, samples: List[ImageSample]) -> TrainConfig:
    '''
    Align the model's image size and sequence length with the dataset.
    '''

    size = DatasetStore.image_size(samples)
    max_len = samples[0].tokens.max_len
    if (config.model.image_size, config.model.max_len) == (size, max_len):
        return config
    logging.getLogger('fan.trainer').info(
        'Using the dataset image size %d and sequence length %d.', size, max_len,
    )
    return config.replace(image_size=size, max_len=max_len)


# ** helper: with_epochs
def with_epochs(config: TrainConfig, epochs: Optional[int]) -> TrainConfig:
    '''
    Override the epoch count, pulling the decay milestone inside the run.
    '''

    if epochs is None:
        return config
    return config.replace(epochs=epochs, milestone=min(config.milestone, epochs - 1))


# *** events

# ** event: train_model
class TrainModel(CliEvent):
    '''
    A domain event to train a model on a generated dataset, writing the run
    manifest, per-epoch metrics and the best and last checkpoints.
    '''

    # * method: execute
    def execute(self,
            data: str,
            out: str,
            config: str = None,
            preset: str = None,
            seed: str = None,
            epochs: str = None,
            max_steps: str = None,
            **kwargs,
        ) -> str:
        '''
        Train a model.

        :param data: The dataset directory (with a train split).
        :type data: str
        :param out: The output directory.
        :type out: str
        :param config: Optional JSON or YAML config file.
        :type config: str
        :param preset: Optional preset name.
        :type preset: str
        :param seed: Optional seed override.
        :type seed: str
        :param epochs: Optional epoch override.
        :type epochs: str
        :param max_steps: Optional step budget.
        :type max_steps: str
        :param kwargs: Additional keyword arguments.
        :type kwargs: dict
        :return: A training summary.
        :rtype: str
        '''

        # Resolve the configuration.
        overrides = {
            'seed': self.parse_int('seed', seed, 0),
            'max_steps': self.parse_int('max_steps', max_steps, 0),
        }
        epochs = self.parse_int('epochs', epochs, 1)
        train_config = with_epochs(ConfigLoader.resolve(preset, config, overrides), epochs)

        # Load the data and align the model dimensions with it.
        train, val, vocab = load_training_data(data)
        train_config = fit_to_data(train_config, train)

        # Record the run before training.
        root = Path(out)
        manifest = RunManifest(
            command='train',
            config_path=config,
            config=train_config.to_flat(),
            seed=train_config.seed,
            output_dir=str(root),
        )
        manifest.write(root / RUN_MANIFEST_FILE)

        trainer = Trainer(train_config, vocab, root)
        history = trainer.fit(train, val)
        manifest.finish(root / RUN_MANIFEST_FILE)

        # Summarize the run.
        last = history[-1] if history else {}
        split = 'val' if val else 'train'
        lines = [
            f'Epochs: {len(history)}',
            f'Steps: {trainer.optimizer.steps}',
            f'Final loss: {last.get("train_loss", float("nan")):.4f}',
            f'Best {split} mIoU: {max(trainer.best_iou, 0.0):.4f}',
            f'Checkpoints: {root}',
        ]
        return '\n'.join(lines)


# ** event: evaluate_model
class EvaluateModel(CliEvent):
    '''
    A domain event to evaluate a checkpoint on one dataset split.
    '''

    # * method: execute
    def execute(self,
            checkpoint: str,
            data: str,
            split: str = 'val',
            threshold: str = None,
            **kwargs,
        ) -> str:
        '''
        Evaluate a checkpoint.

        :param checkpoint: The checkpoint file.
        :type checkpoint: str
        :param data: The dataset directory.
        :type data: str
        :param split: The split to evaluate.
        :type split: str
        :param threshold: Optional binarization threshold.
        :type threshold: str
        :param kwargs: Additional keyword arguments.
        :type kwargs: dict
        :return: The formatted evaluation report.
        :rtype: str
        '''

        threshold = self.parse_float('threshold', threshold)
        threshold = DEFAULT_THRESHOLD if threshold is None else threshold

        state = CheckpointStore.load(checkpoint)
        samples, vocab = DatasetStore.read_split(data, split)
        self.verify(
            vocab == state.vocab,
            'CHECKPOINT_INCOMPATIBLE',
            'The dataset vocabulary differs from the checkpoint vocabulary.',
            reason='the dataset vocabulary differs from the checkpoint vocabulary',
        )
        CheckpointStore.verify_compatible(state, dataclasses.replace(
            state.config,
            image_size=DatasetStore.image_size(samples),
            max_len=samples[0].tokens.max_len,
        ))
        model = state.build_model()

        preds = [model.predict_mask(s.pixels, s.tokens, threshold) for s in samples]
        report = EvaluationReport.from_masks(preds, [s.gt_mask for s in samples], split)
        return report.format()


# ** event: run_ablation
class RunAblation(CliEvent):
    '''
    A domain event to train and evaluate every row of the ablation matrix
    under a shared step budget and seed.
    '''

    # * method: execute
    def execute(self,
            data: str,
            out: str,
            config: str = None,
            preset: str = None,
            steps: str = None,
            **kwargs,
        ) -> str:
        '''
        Run the ablation matrix.

        :param data: The dataset directory (train split, optional val split).
        :type data: str
        :param out: The output directory.
        :type out: str
        :param config: Optional JSON or YAML base config file.
        :type config: str
        :param preset: Optional preset name.
        :type preset: str
        :param steps: Optional step budget per row.
        :type steps: str
        :param kwargs: Additional keyword arguments.
        :type kwargs: dict
        :return: The ablation table.
        :rtype: str
        '''

        logger = logging.getLogger('fan.ablation')
        steps = self.parse_int('steps', steps, 1) or ConfigLoader.ablation_steps()

        train, val, vocab = load_training_data(data)
        base = fit_to_data(ConfigLoader.resolve(preset, config), train)
        eval_samples = val or train
        split = 'val' if val else 'train'

        root = Path(out)
        RunManifest(
            command='ablate',
            config_path=config,
            config=dict(base.to_flat(), ablation_steps=steps),
            seed=base.seed,
            output_dir=str(root),
        ).write(root / RUN_MANIFEST_FILE)

        # Each row trains from the same seed so rows differ only by their overrides.
        rows = []
        results_file = root / ABLATION_FILE
        results_file.write_text('', encoding='utf-8')
        for row in ConfigLoader.ablations():
            row_config = base.replace(**row['overrides'], max_steps=steps)
            trainer = Trainer(row_config, vocab)
            trainer.fit(train, None)
            report = trainer.evaluate(eval_samples, split)
            record = {
                'name': row['name'],
                'group': row['group'],
                'overrides': row['overrides'],
                'steps': trainer.optimizer.steps,
                'final_loss': trainer.step_losses[-1] if trainer.step_losses else None,
                split: report.to_dict(),
            }
            with open(results_file, 'a', encoding='utf-8') as handle:
                handle.write(json.dumps(record, sort_keys=True) + '\n')
            logger.info('%s: %s mIoU %.4f', row['name'], split, report.mean_iou)
            rows.append((row['group'], row['name'], report))

        # Format the table.
        width = max(len(name) for _, name, _ in rows)
        lines = [f'{"Group":<14} {"Setting":<{width}}  mIoU    oIoU    P@0.5']
        for group, name, report in rows:
            lines.append(
                f'{group:<14} {name:<{width}}  {report.mean_iou:.4f}  {report.overall_iou:.4f}  {report.precision[0.5]:.4f}'
            )
        return '\n'.join(lines)
