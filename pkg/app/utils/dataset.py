# *** imports

# ** core
import json
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

# ** infra
from tiferet.events import RaiseError

# ** app
from .netpbm import NetpbmCodec
from .synthetic import GenerationConfig, ImageSample, SceneGenerator, SceneSpec
from .text import TokenSequence, Vocabulary


# *** constants

# ** constant: manifest_file
MANIFEST_FILE = 'manifest.jsonl'

# ** constant: vocab_file
VOCAB_FILE = 'vocab.txt'

# ** constant: split_offsets
SPLIT_OFFSETS = {'train': 0, 'val': 1_000_000, 'test': 2_000_000}

# ** constant: seed_stride
SEED_STRIDE = 10_000_000

# ** constant: manifest_keys
MANIFEST_KEYS = ('id', 'image', 'mask', 'expression', 'token_ids', 'true_length')


# *** utils

# ** util: dataset_store
class DatasetStore:
    '''
    On-disk dataset splits: images/*.ppm, masks/*.pgm, manifest.jsonl and
    vocab.txt per split directory.
    '''

    # * method: split_seed (static)
    @staticmethod
    def split_seed(seed: int, split: str, index: int) -> int:
        '''
        Per-sample seed; splits occupy disjoint ranges by construction.
        '''

        if split not in SPLIT_OFFSETS:
            RaiseError.execute(
                error_code='INVALID_ARGUMENT',
                argument='split',
                value=split,
                reason=f'expected one of {", ".join(SPLIT_OFFSETS)}',
            )
        if not 0 <= index < SPLIT_OFFSETS['val']:
            RaiseError.execute(
                error_code='INVALID_ARGUMENT',
                argument='count',
                value=index,
                reason=f'at most {SPLIT_OFFSETS["val"]} samples per split',
            )
        return seed * SEED_STRIDE + SPLIT_OFFSETS[split] + index

    # * method: generate_split (static)
    @staticmethod
    def generate_split(
            split: str,
            count: int,
            seed: int,
            config: GenerationConfig,
            vocab: Vocabulary,
        ) -> List[ImageSample]:
        return [
            SceneGenerator.generate_sample(
                DatasetStore.split_seed(seed, split, index), config, vocab, f'{split}-{index:05d}',
            )
            for index in range(count)
        ]

    # * method: write_dataset (static)
    @staticmethod
    def write_dataset(samples: Sequence[ImageSample], directory: Path, vocab: Vocabulary) -> Path:
        '''
        Write samples, their manifest and the vocabulary into a directory.

        :param samples: The samples.
        :type samples: Sequence[ImageSample]
        :param directory: The target directory (created if missing).
        :type directory: Path
        :param vocab: The vocabulary the token ids refer to.
        :type vocab: Vocabulary
        :return: The manifest path.
        :rtype: Path
        '''

        directory = Path(directory)
        (directory / 'images').mkdir(parents=True, exist_ok=True)
        (directory / 'masks').mkdir(parents=True, exist_ok=True)
        vocab.save(directory / VOCAB_FILE)

        lines = []
        for sample in samples:
            image_path = f'images/{sample.sample_id}.ppm'
            mask_path = f'masks/{sample.sample_id}.pgm'
            NetpbmCodec.write_ppm(directory / image_path, sample.image)
            NetpbmCodec.write_pgm(directory / mask_path, sample.gt_mask)
            record = {
                'id': sample.sample_id,
                'image': image_path,
                'mask': mask_path,
                'expression': sample.expression,
                'token_ids': list(sample.tokens.ids),
                'true_length': sample.tokens.true_length,
            }
            if sample.scene is not None:
                record['scene'] = sample.scene.to_dict()
            lines.append(json.dumps(record, sort_keys=True))

        manifest = directory / MANIFEST_FILE
        manifest.write_text(''.join(f'{line}\n' for line in lines), encoding='utf-8')
        return manifest

    # * method: parse_record (static)
    @staticmethod
    def parse_record(line: str, manifest: Path, number: int) -> Dict:
        try:
            record = json.loads(line)
        except ValueError as exc:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=f'{manifest}:{number}',
                reason=f'malformed manifest line ({exc})',
            )
        missing = [key for key in MANIFEST_KEYS if not isinstance(record, dict) or key not in record]
        if missing:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=f'{manifest}:{number}',
                reason=f'manifest record lacks {", ".join(missing)}',
            )
        return record

    # * method: check_tokens (static)
    @staticmethod
    def check_tokens(token_ids: Sequence, true_length, vocab: Vocabulary, location: str) -> TokenSequence:
        '''
        Validate a stored id sequence: [SOS] words [EOS] then [PAD] to the
        end, every id inside the vocabulary.

        :param token_ids: The stored ids.
        :type token_ids: Sequence
        :param true_length: The stored length including [SOS] and [EOS].
        :type true_length: Any
        :param vocab: The split vocabulary.
        :type vocab: Vocabulary
        :param location: The manifest line, for the error.
        :type location: str
        :return: The token sequence.
        :rtype: TokenSequence
        '''

        def reject(reason: str) -> None:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=location,
                reason=reason,
            )

        try:
            ids = tuple(int(i) for i in token_ids)
            length = int(true_length)
        except (TypeError, ValueError):
            reject('token ids and true_length must be integers')
        if any(i < 0 or i >= len(vocab) for i in ids):
            reject('token id outside the vocabulary')
        if not 2 <= length <= len(ids):
            reject(f'true_length {length} outside [2, {len(ids)}]')
        if ids[0] != vocab.sos_id or ids[length - 1] != vocab.eos_id:
            reject('tokens must start with [SOS] and end with [EOS] at true_length')
        special = {vocab.pad_id, vocab.sos_id, vocab.eos_id}
        if any(i in special for i in ids[1:length - 1]):
            reject('reserved token inside the expression')
        if any(i != vocab.pad_id for i in ids[length:]):
            reject('tokens after [EOS] must be [PAD]')
        return TokenSequence(ids, length)

    # * method: read_dataset (static)
    @staticmethod
    def read_dataset(directory: Path) -> Tuple[List[ImageSample], Vocabulary]:
        '''
        Read a directory written by write_dataset.

        :param directory: The dataset directory.
        :type directory: Path
        :return: The samples in manifest order and the vocabulary.
        :rtype: Tuple[List[ImageSample], Vocabulary]
        '''

        directory = Path(directory)
        manifest = directory / MANIFEST_FILE
        if not manifest.is_file():
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=str(manifest),
                reason='manifest is missing',
            )
        vocab = Vocabulary.load(directory / VOCAB_FILE)

        samples: List[ImageSample] = []
        lines = manifest.read_text(encoding='utf-8').splitlines()
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            record = DatasetStore.parse_record(line, manifest, number)
            image = NetpbmCodec.read_ppm(directory / record['image'])
            mask = NetpbmCodec.read_pgm(directory / record['mask'])

            # All samples share one size, and masks match their images.
            if mask.shape != image.shape[:2]:
                RaiseError.execute(
                    error_code='DATA_ERROR',
                    file=str(directory / record['mask']),
                    reason=f'mask {mask.shape} does not match image {image.shape[:2]}',
                )
            if samples and image.shape != samples[0].image.shape:
                RaiseError.execute(
                    error_code='DATA_ERROR',
                    file=str(directory / record['image']),
                    reason=f'image size {image.shape[:2]} differs from {samples[0].image.shape[:2]}',
                )

            tokens = DatasetStore.check_tokens(record['token_ids'], record['true_length'], vocab, f'{manifest}:{number}')

            samples.append(ImageSample(
                sample_id=str(record['id']),
                image=image,
                expression=record['expression'],
                tokens=tokens,
                gt_mask=mask,
                scene=SceneSpec.from_dict(record['scene']) if 'scene' in record else None,
            ))
        return samples, vocab

    # * method: read_split (static)
    @staticmethod
    def read_split(root: Path, split: str) -> Tuple[List[ImageSample], Vocabulary]:
        '''
        Read root/<split>; the root itself is accepted when it holds a manifest.
        '''

        root = Path(root)
        directory = root / split
        if not (directory / MANIFEST_FILE).is_file() and (root / MANIFEST_FILE).is_file():
            directory = root
        return DatasetStore.read_dataset(directory)

    # * method: image_size (static)
    @staticmethod
    def image_size(samples: Sequence[ImageSample]) -> int:
        if not samples:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file='dataset',
                reason='no samples',
            )
        height, width = samples[0].image.shape[:2]
        if height != width:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=samples[0].sample_id,
                reason=f'images must be square, got {height}x{width}',
            )
        return int(height)