# *** imports

# ** core
import json

# ** infra
import pytest

# ** app
from tiferet import TiferetError
from app.utils.config import ConfigLoader, ModelConfig, RunManifest, TrainConfig


# *** constants

# ** constant: preset_names
PRESET_NAMES = ['desk', 'full', 'full-gref', 'gradcheck', 'overfit', 'smoke']

# ** constant: principle_rows
PRINCIPLE_ROWS = [
    'Simple Baseline',
    '+ Language-to-Vision Decoder',
    '+ Single-Scale Vision Projection Module',
    '+ Multi-Scale Vision Projection Module',
    '+ Activation Module',
    'Only utilize sentence embedding',
]


# *** tests

# ** test: defaults_validate
def test_defaults_validate() -> None:
    '''
    Test that the desk-scale defaults are a valid configuration.
    '''

    # Validate the defaults.
    config = TrainConfig().validate()

    # Assert a few defaults.
    assert config.model.image_size == 64
    assert config.model.max_len == 17
    assert config.threshold == 0.35


# ** test: every_preset_resolves
@pytest.mark.parametrize('preset', PRESET_NAMES)
def test_every_preset_resolves(preset) -> None:
    '''
    Test that every catalog preset yields a valid configuration.
    '''

    # Resolve the preset.
    config = ConfigLoader.resolve(preset)

    # Assert it validated.
    assert isinstance(config, TrainConfig)
    assert config.model.image_size % 32 == 0


# ** test: full_preset_values
def test_full_preset_values() -> None:
    '''
    Test the full-scale training recipe in the full presets.
    '''

    # Resolve the full and full-gref presets.
    full = ConfigLoader.resolve('full')
    gref = ConfigLoader.resolve('full-gref')

    # Assert the recipe.
    assert full.model.image_size == 416
    assert full.model.max_len == 17
    assert gref.model.max_len == 22
    assert full.batch_size == 64
    assert full.epochs == 50
    assert full.base_lr == pytest.approx(1e-4)
    assert full.milestone == 35
    assert (full.model.l2v_layers, full.model.l2v_heads, full.model.l2v_ffn) == (6, 8, 2048)


# ** test: unknown_preset
def test_unknown_preset() -> None:
    '''
    Test that an unknown preset raises UNKNOWN_PRESET.
    '''

    # Resolve a missing preset and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        ConfigLoader.resolve('huge')

    # Assert the error code.
    assert exc_info.value.error_code == 'UNKNOWN_PRESET'


# ** test: resolve_file_and_overrides
def test_resolve_file_and_overrides(tmp_path) -> None:
    '''
    Test the precedence preset ← file ← overrides, with CLI strings coerced.
    '''

    # Write a JSON config naming a preset.
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'preset': 'smoke', 'epochs': 4, 'use_l2v': False}))

    # Resolve with string overrides.
    config = ConfigLoader.resolve(None, str(path), {'seed': '9', 'epochs': None, 'vpm_mode': 'single'})

    # Assert each layer applied.
    assert config.model.fusion_dim == 16
    assert config.epochs == 4
    assert config.model.use_l2v is False
    assert config.seed == 9
    assert config.model.vpm_mode == 'single'


# ** test: resolve_yaml_file
def test_resolve_yaml_file(tmp_path) -> None:
    '''
    Test that YAML config files are accepted.
    '''

    # Write a YAML config.
    path = tmp_path / 'run.yml'
    path.write_text('preset: smoke\nvision_channels: [8, 8, 16, 32]\n')

    # Resolve it.
    config = ConfigLoader.resolve(path=str(path))

    # Assert the tuple field was coerced.
    assert config.model.vision_channels == (8, 8, 16, 32)


# ** test: unknown_key
def test_unknown_key(tmp_path) -> None:
    '''
    Test that an unknown config key raises INVALID_CONFIG.
    '''

    # Write a config with a misspelled key.
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'epoch': 3}))

    # Resolve it and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        ConfigLoader.resolve(path=str(path))

    # Assert the error code.
    assert exc_info.value.error_code == 'INVALID_CONFIG'


# ** test: unreadable_file
def test_unreadable_file(tmp_path) -> None:
    '''
    Test that a missing or non-mapping config file raises DATA_ERROR.
    '''

    # Write a list instead of a mapping.
    path = tmp_path / 'run.json'
    path.write_text('[1, 2]')

    # Assert both files are rejected.
    for target in (path, tmp_path / 'missing.json'):
        with pytest.raises(TiferetError) as exc_info:
            ConfigLoader.resolve(path=str(target))
        assert exc_info.value.error_code == 'DATA_ERROR'


# ** test: invalid_values
@pytest.mark.parametrize('overrides', [
    {'fusion_dim': 30},
    {'fusion_heads': 5},
    {'image_size': 100},
    {'l2v_layers': 0},
    {'vpm_mode': 'double'},
    {'threshold': 1.5},
    {'milestone': 40},
    {'epochs': 'many'},
    {'use_l2v': 'maybe'},
])
def test_invalid_values(overrides) -> None:
    '''
    Test that inconsistent values raise INVALID_CONFIG.
    '''

    # Resolve with a bad override and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        ConfigLoader.resolve('desk', overrides=overrides)

    # Assert the error code.
    assert exc_info.value.error_code == 'INVALID_CONFIG'


# ** test: config_hash
def test_config_hash() -> None:
    '''
    Test that the hash is stable and sensitive to every model field.
    '''

    # Hash equal and differing configs.
    base = ModelConfig()

    # Assert equality and sensitivity.
    assert base.config_hash() == ModelConfig().config_hash()
    assert base.config_hash() != ModelConfig(use_l2v=False).config_hash()
    assert base.config_hash() != ModelConfig(ln_eps=1e-6).config_hash()
    assert len(base.config_hash()) == 64


# ** test: replace_keeps_other_fields
def test_replace_keeps_other_fields() -> None:
    '''
    Test that replace applies flat changes and keeps everything else.
    '''

    # Replace one model and one training field.
    config = ConfigLoader.resolve('smoke').replace(l2v_layers=3, seed=5)

    # Assert the changes and an untouched field.
    assert config.model.l2v_layers == 3
    assert config.seed == 5
    assert config.model.fusion_dim == 16


# ** test: ablation_catalog
def test_ablation_catalog() -> None:
    '''
    Test that the ablation matrix carries the published row labels and
    valid overrides.
    '''

    # Read the ablation rows.
    rows = ConfigLoader.ablations()
    names = [row['name'] for row in rows]

    # Assert the principle rows, groups and that every row resolves.
    assert names[:len(PRINCIPLE_ROWS)] == PRINCIPLE_ROWS
    assert {row['group'] for row in rows} == {'principles', 'l2v-structure', 'vpm-structure'}
    assert ConfigLoader.ablation_steps() == 50
    for row in rows:
        ConfigLoader.resolve('smoke').replace(**row['overrides'])


# ** test: run_manifest
def test_run_manifest(tmp_path) -> None:
    '''
    Test that the manifest records the config before and after the run.
    '''

    # Write and finish a manifest.
    path = tmp_path / 'out' / 'run.json'
    manifest = RunManifest('train', None, ConfigLoader.resolve('smoke').to_flat(), 0, str(tmp_path))
    manifest.write(path)
    started = json.loads(path.read_text())
    manifest.finish(path)
    finished = json.loads(path.read_text())

    # Assert the fields.
    assert started['command'] == 'train'
    assert started['finished_at'] is None
    assert started['config']['fusion_dim'] == 16
    assert finished['finished_at'] is not None
