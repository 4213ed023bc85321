# *** imports

# ** core
import json

# ** infra
import pytest
from tiferet.events import DomainEvent
from tiferet.assets.exceptions import TiferetError

# ** app
from app.events.data import GenerateDataset
from app.events.training import EvaluateModel, RunAblation, TrainModel
from app.utils.config import ConfigLoader


# *** fixtures

# ** fixture: dataset
@pytest.fixture(scope='module')
def dataset(tmp_path_factory):
    '''
    A tiny 64×64 dataset with every split.
    '''

    root = tmp_path_factory.mktemp('data')
    DomainEvent.handle(GenerateDataset, out=str(root), train='4', val='2', test='2', size='64', seed='0')
    return root


# ** fixture: trained
@pytest.fixture(scope='module')
def trained(dataset, tmp_path_factory):
    '''
    A smoke-preset run of one epoch and two steps, with its summary.
    '''

    out = tmp_path_factory.mktemp('run')
    result = DomainEvent.handle(
        TrainModel,
        data=str(dataset),
        out=str(out),
        preset='smoke',
        epochs='1',
        max_steps='2',
    )
    return out, result


# *** tests

# ** test: test_train_model
def test_train_model(trained):
    '''
    Test the training summary and the run artifacts.
    '''

    # Unpack the run.
    out, result = trained

    # Verify the summary.
    assert 'Epochs: 1' in result
    assert 'Steps: 2' in result
    assert 'Best val mIoU:' in result

    # Verify the artifacts and the dataset-aligned config.
    for name in ('run.json', 'metrics.jsonl', 'best.ckpt', 'last.ckpt'):
        assert (out / name).is_file()
    manifest = json.loads((out / 'run.json').read_text())
    assert manifest['command'] == 'train'
    assert manifest['config']['image_size'] == 64
    assert manifest['config']['max_len'] == 17
    assert manifest['config']['milestone'] == 0


# ** test: test_train_model_unknown_preset
def test_train_model_unknown_preset(dataset, tmp_path):
    '''
    Test that an unknown preset raises UNKNOWN_PRESET.
    '''

    # Execute with a missing preset and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        DomainEvent.handle(TrainModel, data=str(dataset), out=str(tmp_path), preset='giant')

    # Verify the error code.
    assert exc_info.value.error_code == 'UNKNOWN_PRESET'


# ** test: test_train_model_bad_epochs
def test_train_model_bad_epochs(dataset, tmp_path):
    '''
    Test that zero epochs raises INVALID_ARGUMENT.
    '''

    # Execute with epochs 0 and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        DomainEvent.handle(TrainModel, data=str(dataset), out=str(tmp_path), preset='smoke', epochs='0')

    # Verify the error code.
    assert exc_info.value.error_code == 'INVALID_ARGUMENT'


# ** test: test_train_model_missing_data
def test_train_model_missing_data(tmp_path):
    '''
    Test that a directory without a train split raises DATA_ERROR.
    '''

    # Execute against an empty directory and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        DomainEvent.handle(TrainModel, data=str(tmp_path), out=str(tmp_path / 'out'), preset='smoke')

    # Verify the error code.
    assert exc_info.value.error_code == 'DATA_ERROR'


# ** test: test_evaluate_model
def test_evaluate_model(dataset, trained):
    '''
    Test evaluating the best checkpoint on the test split.
    '''

    # Execute the evaluate event.
    out, _ = trained
    result = DomainEvent.handle(EvaluateModel, checkpoint=str(out / 'best.ckpt'), data=str(dataset), split='test')

    # Verify the report.
    assert result.splitlines()[0] == 'split: test (2 samples)'
    assert 'mean IoU:' in result
    assert 'P@0.5:' in result


# ** test: test_evaluate_model_bad_threshold
@pytest.mark.parametrize('threshold, code', [('high', 'INVALID_ARGUMENT'), ('1.5', 'INVALID_THRESHOLD')])
def test_evaluate_model_bad_threshold(dataset, trained, threshold, code):
    '''
    Test that malformed or out-of-range thresholds are rejected.
    '''

    # Execute with a bad threshold and expect a TiferetError.
    out, _ = trained
    with pytest.raises(TiferetError) as exc_info:
        DomainEvent.handle(
            EvaluateModel,
            checkpoint=str(out / 'last.ckpt'),
            data=str(dataset),
            split='val',
            threshold=threshold,
        )

    # Verify the error code.
    assert exc_info.value.error_code == code


# ** test: test_evaluate_model_incompatible
def test_evaluate_model_incompatible(trained, tmp_path):
    '''
    Test that a dataset at another image size raises CHECKPOINT_INCOMPATIBLE.
    '''

    # Generate a 96×96 split.
    out, _ = trained
    DomainEvent.handle(GenerateDataset, out=str(tmp_path), train='0', val='1', test='0', size='96')

    # Execute the evaluate event and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        DomainEvent.handle(EvaluateModel, checkpoint=str(out / 'best.ckpt'), data=str(tmp_path), split='val')

    # Verify the error code.
    assert exc_info.value.error_code == 'CHECKPOINT_INCOMPATIBLE'


# ** test: test_evaluate_model_missing_checkpoint
def test_evaluate_model_missing_checkpoint(dataset, tmp_path):
    '''
    Test that a missing checkpoint raises CHECKPOINT_CORRUPT.
    '''

    # Execute with no checkpoint and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        DomainEvent.handle(EvaluateModel, checkpoint=str(tmp_path / 'none.ckpt'), data=str(dataset))

    # Verify the error code.
    assert exc_info.value.error_code == 'CHECKPOINT_CORRUPT'


# ** test: test_run_ablation
def test_run_ablation(dataset, tmp_path):
    '''
    Test that one step per row trains and scores every ablation setting.
    '''

    # Execute the ablation event.
    result = DomainEvent.handle(RunAblation, data=str(dataset), out=str(tmp_path), preset='smoke', steps='1')

    # Verify the table.
    rows = ConfigLoader.ablations()
    assert 'mIoU' in result.splitlines()[0]
    assert len(result.splitlines()) == len(rows) + 1
    for row in rows:
        assert row['name'] in result

    # Verify the records.
    records = [json.loads(line) for line in (tmp_path / 'ablation.jsonl').read_text().splitlines()]
    assert [record['name'] for record in records] == [row['name'] for row in rows]
    assert all(record['steps'] == 1 for record in records)
    assert records[0]['val']['samples'] == 2
