# *** imports

# ** core
import dataclasses
import struct

# ** infra
import numpy as np
import pytest

# ** app
from tiferet import TiferetError
from app.utils.checkpoint import CHECKPOINT_MAGIC, Checkpoint, CheckpointStore
from app.utils.config import ConfigLoader
from app.utils.model import FanModel
from app.utils.optim import AdamOptimizer
from app.utils.text import Vocabulary


# *** fixtures

# ** fixture: model
@pytest.fixture
def model() -> FanModel:
    '''
    A gradcheck-scale model.
    '''

    vocab = Vocabulary.from_words(['red', 'blue', 'circle'])
    return FanModel(ConfigLoader.resolve('gradcheck').model, vocab, seed=3)


# ** fixture: saved
@pytest.fixture
def saved(model, tmp_path):
    '''
    A checkpoint with optimizer moments written to disk.
    '''

    optimizer = AdamOptimizer(model.params)
    for _, tensor in model.params.items():
        tensor.grad = np.full_like(tensor.data, 0.01)
    optimizer.step(lambda name: 1e-3)
    checkpoint = Checkpoint.from_model(model, optimizer, epoch=4, metrics={'train_loss': 0.5})
    return CheckpointStore.save(checkpoint, tmp_path / 'run' / 'last.ckpt')


# *** tests

# ** test: save_load_round_trip
def test_save_load_round_trip(model, saved) -> None:
    '''
    Test that every field survives a save and load.
    '''

    # Load the checkpoint.
    loaded = CheckpointStore.load(saved)

    # Assert the fields.
    assert loaded.config == model.config
    assert loaded.vocab == model.vocab
    assert loaded.epoch == 4
    assert loaded.step == 1
    assert loaded.metrics == {'train_loss': 0.5}
    assert sorted(loaded.params) == model.params.names()
    for name, tensor in model.params.items():
        assert np.array_equal(loaded.params[name], tensor.data)
    assert len(loaded.moments) == 2 * len(model.params.names())
    assert not saved.with_name(saved.name + '.partial').exists()


# ** test: build_model_predicts_identically
def test_build_model_predicts_identically(model, saved) -> None:
    '''
    Test that a rebuilt model reproduces the saved model's logits.
    '''

    # Rebuild and predict with both models.
    rebuilt = CheckpointStore.load(saved).build_model()
    image = np.random.default_rng(0).random((32, 32, 3))
    tokens = model.tokenize('red circle')

    # Assert bit-identical logits.
    assert np.array_equal(rebuilt.predict_logits(image, tokens), model.predict_logits(image, tokens))


# ** test: encode_deterministic
def test_encode_deterministic(model) -> None:
    '''
    Test that encoding the same checkpoint twice gives identical bytes.
    '''

    # Encode twice.
    checkpoint = Checkpoint.from_model(model)

    # Assert equality and the magic prefix.
    first = CheckpointStore.encode(checkpoint)
    assert first == CheckpointStore.encode(checkpoint)
    assert first.startswith(CHECKPOINT_MAGIC)


# ** test: load_corrupt
@pytest.mark.parametrize('damage', ['missing', 'magic', 'version', 'truncated', 'trailing', 'hash'])
def test_load_corrupt(saved, damage) -> None:
    '''
    Test that damaged files raise CHECKPOINT_CORRUPT.
    '''

    # Damage the file.
    data = saved.read_bytes()
    offset = len(CHECKPOINT_MAGIC)
    if damage == 'missing':
        saved.unlink()
    elif damage == 'magic':
        saved.write_bytes(b'XXXXXXXX' + data[offset:])
    elif damage == 'version':
        saved.write_bytes(data[:offset] + struct.pack('<I', 99) + data[offset + 4:])
    elif damage == 'truncated':
        saved.write_bytes(data[:-16])
    elif damage == 'trailing':
        saved.write_bytes(data + b'\x00' * 8)
    else:
        saved.write_bytes(data.replace(b'"fusion_dim":8,', b'"fusion_dim":4,', 1))

    # Load and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        CheckpointStore.load(saved)

    # Assert the error code.
    assert exc_info.value.error_code == 'CHECKPOINT_CORRUPT'


# ** test: verify_compatible
def test_verify_compatible(model, saved) -> None:
    '''
    Test the config hash comparison.
    '''

    # Load the checkpoint.
    loaded = CheckpointStore.load(saved)

    # Assert the matching config passes.
    CheckpointStore.verify_compatible(loaded, model.config)

    # Assert a different config is rejected.
    with pytest.raises(TiferetError) as exc_info:
        CheckpointStore.verify_compatible(loaded, dataclasses.replace(model.config, use_l2v=False))
    assert exc_info.value.error_code == 'CHECKPOINT_INCOMPATIBLE'


# ** test: build_model_shape_mismatch
def test_build_model_shape_mismatch(model, saved) -> None:
    '''
    Test that parameters of the wrong shape cannot be loaded.
    '''

    # Swap in a wider vocabulary so the embedding table no longer fits.
    loaded = CheckpointStore.load(saved)
    loaded.vocab = Vocabulary.from_words(['red', 'blue', 'circle', 'square'])

    # Build and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        loaded.build_model()

    # Assert the error code.
    assert exc_info.value.error_code == 'CHECKPOINT_INCOMPATIBLE'
