# *** imports

# ** core
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .config import ModelConfig
from .model import FanModel
from .optim import AdamOptimizer
from .text import Vocabulary


# *** constants

# ** constant: checkpoint_magic
CHECKPOINT_MAGIC = b'FANCKPT\x00'

# ** constant: checkpoint_version
CHECKPOINT_VERSION = 1

# ** constant: blob_dtype
BLOB_DTYPE = np.dtype('<f8')


# *** models

# ** model: checkpoint
@dataclass
class Checkpoint:
    '''
    Everything needed to resume training or run inference: parameters,
    optimizer moments, the model config and its hash, and the vocabulary.
    '''

    config: ModelConfig
    vocab: Vocabulary
    params: Dict[str, np.ndarray]
    moments: Dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    step: int = 0
    metrics: Dict[str, Any] = field(default_factory=dict)

    # * property: config_hash
    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    # * method: from_model (static)
    @staticmethod
    def from_model(
            model: FanModel,
            optimizer: Optional[AdamOptimizer] = None,
            epoch: int = 0,
            metrics: Dict[str, Any] = None,
        ) -> 'Checkpoint':
        return Checkpoint(
            config=model.config,
            vocab=model.vocab,
            params=model.params.state(),
            moments=optimizer.state() if optimizer else {},
            epoch=epoch,
            step=optimizer.steps if optimizer else 0,
            metrics=dict(metrics or {}),
        )

    # * method: build_model
    def build_model(self) -> FanModel:
        '''
        Rebuild the model with the stored parameters.
        '''

        model = FanModel(self.config, self.vocab)
        model.params.load_state(self.params)
        return model


# *** utils

# ** util: checkpoint_store
class CheckpointStore:
    '''
    Little-endian binary checkpoints: magic, u32 version, u32 header length,
    a canonical JSON header, then name-sorted float64 blobs.
    '''

    # * method: encode (static)
    @staticmethod
    def encode(checkpoint: Checkpoint) -> bytes:
        blobs = {f'param/{name}': values for name, values in checkpoint.params.items()}
        blobs.update(checkpoint.moments)
        names = sorted(blobs)

        header = {
            'config': checkpoint.config.to_dict(),
            'config_hash': checkpoint.config_hash,
            'epoch': checkpoint.epoch,
            'step': checkpoint.step,
            'metrics': checkpoint.metrics,
            'vocab': list(checkpoint.vocab.tokens),
            'tensors': [{'name': name, 'shape': list(blobs[name].shape)} for name in names],
        }
        header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')

        parts = [CHECKPOINT_MAGIC, struct.pack('<II', CHECKPOINT_VERSION, len(header_bytes)), header_bytes]
        parts.extend(np.ascontiguousarray(blobs[name], dtype=BLOB_DTYPE).tobytes() for name in names)
        return b''.join(parts)

    # * method: save (static)
    @staticmethod
    def save(checkpoint: Checkpoint, path: Path) -> Path:
        '''
        Write through a temporary file so an interrupted save never replaces
        the previous checkpoint.
        '''

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        partial = path.with_name(path.name + '.partial')
        partial.write_bytes(CheckpointStore.encode(checkpoint))
        os.replace(partial, path)
        return path

    # * method: corrupt (static)
    @staticmethod
    def corrupt(path: Path, reason: str) -> None:
        RaiseError.execute(
            error_code='CHECKPOINT_CORRUPT',
            file=str(path),
            reason=reason,
        )

    # * method: load (static)
    @staticmethod
    def load(path: Path) -> Checkpoint:
        '''
        Read a checkpoint written by save.

        :param path: The checkpoint file.
        :type path: Path
        :return: The checkpoint.
        :rtype: Checkpoint
        '''

        path = Path(path)
        if not path.is_file():
            CheckpointStore.corrupt(path, 'file is missing')
        data = path.read_bytes()

        # Fixed preamble.
        preamble = len(CHECKPOINT_MAGIC) + 8
        if len(data) < preamble or data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
            CheckpointStore.corrupt(path, 'not a checkpoint file')
        version, header_length = struct.unpack('<II', data[len(CHECKPOINT_MAGIC):preamble])
        if version != CHECKPOINT_VERSION:
            CheckpointStore.corrupt(path, f'unsupported version {version}')

        # Header.
        try:
            header = json.loads(data[preamble:preamble + header_length].decode('utf-8'))
            config = ModelConfig(**{
                k: tuple(v) if k == 'vision_channels' else v for k, v in header['config'].items()
            })
            tensors = header['tensors']
            stored_hash = header['config_hash']
        except (ValueError, KeyError, TypeError) as exc:
            CheckpointStore.corrupt(path, f'unreadable header ({exc})')
        if config.config_hash() != stored_hash:
            CheckpointStore.corrupt(path, 'config hash does not match the stored config')

        # Blobs.
        offset = preamble + header_length
        blobs = {}
        for entry in tensors:
            shape = tuple(int(s) for s in entry['shape'])
            size = int(np.prod(shape)) * BLOB_DTYPE.itemsize
            if offset + size > len(data):
                CheckpointStore.corrupt(path, f'truncated at {entry["name"]}')
            blobs[entry['name']] = np.frombuffer(data, dtype=BLOB_DTYPE, count=size // BLOB_DTYPE.itemsize, offset=offset).reshape(shape).astype(np.float64)
            offset += size
        if offset != len(data):
            CheckpointStore.corrupt(path, f'{len(data) - offset} trailing bytes')

        return Checkpoint(
            config=config,
            vocab=Vocabulary(header['vocab']),
            params={name[len('param/'):]: v for name, v in blobs.items() if name.startswith('param/')},
            moments={name: v for name, v in blobs.items() if not name.startswith('param/')},
            epoch=int(header['epoch']),
            step=int(header['step']),
            metrics=header.get('metrics', {}),
        )

    # * method: verify_compatible (static)
    @staticmethod
    def verify_compatible(checkpoint: Checkpoint, config: ModelConfig) -> None:
        '''
        Require the checkpoint to have been trained with this model config.
        '''

        if checkpoint.config_hash != config.config_hash():
            RaiseError.execute(
                error_code='CHECKPOINT_INCOMPATIBLE',
                reason=f'config hash {checkpoint.config_hash[:12]} does not match {config.config_hash()[:12]}',
            )
