# *** imports

# ** core
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

# ** infra
import yaml
from tiferet.events import RaiseError


# *** constants

# ** constant: model_config_file
MODEL_CONFIG_FILE = Path(__file__).resolve().parents[1] / 'configs' / 'model.yml'

# ** constant: vpm_modes
VPM_MODES = ('none', 'single', 'multi')

# ** constant: text_granularities
TEXT_GRANULARITIES = ('word', 'sentence')


# *** models

# ** model: model_config
@dataclass(frozen=True)
class ModelConfig:
    '''
    Dimensions, layer counts and ablation toggles of the network.
    Defaults are the desk-scale setting.
    '''

    image_size: int = 64
    max_len: int = 17
    text_dim: int = 64
    text_layers: int = 2
    text_heads: int = 4
    text_ffn: int = 128
    vision_channels: Tuple[int, ...] = (32, 64, 128, 256)
    fusion_dim: int = 64
    fusion_heads: int = 4
    fusion_ffn: int = 128
    l2v_layers: int = 2
    l2v_heads: int = 4
    l2v_ffn: int = 128
    l2v_encoder_layers: int = 0
    use_activation: bool = True
    vpm_mode: str = 'multi'
    vpm_self_attention: bool = True
    use_l2v: bool = True
    text_granularity: str = 'word'
    ln_eps: float = 1e-5

    # * method: validate
    def validate(self) -> 'ModelConfig':
        '''
        Check dimensional consistency, raising INVALID_CONFIG on the first violation.

        :return: This config.
        :rtype: ModelConfig
        '''

        checks = [
            (self.image_size > 0 and self.image_size % 32 == 0, 'image_size', 'must be a positive multiple of 32'),
            (self.max_len >= 3, 'max_len', 'must be at least 3'),
            (len(self.vision_channels) == 4 and min(self.vision_channels) > 0, 'vision_channels', 'needs four positive entries'),
            (self.text_dim > 0 and self.text_dim % self.text_heads == 0, 'text_heads', 'must divide text_dim'),
            (self.fusion_dim % self.fusion_heads == 0, 'fusion_heads', 'must divide fusion_dim'),
            (self.fusion_dim % self.l2v_heads == 0, 'l2v_heads', 'must divide fusion_dim'),
            (self.fusion_dim > 0 and self.fusion_dim % 4 == 0, 'fusion_dim', 'must be a positive multiple of 4'),
            (self.text_layers >= 0, 'text_layers', 'must be non-negative'),
            (self.l2v_layers >= 1, 'l2v_layers', 'must be at least 1'),
            (self.l2v_encoder_layers >= 0, 'l2v_encoder_layers', 'must be non-negative'),
            (self.text_ffn > 0 and self.fusion_ffn > 0 and self.l2v_ffn > 0, 'ffn', 'hidden sizes must be positive'),
            (self.vpm_mode in VPM_MODES, 'vpm_mode', f'must be one of {VPM_MODES}'),
            (self.text_granularity in TEXT_GRANULARITIES, 'text_granularity', f'must be one of {TEXT_GRANULARITIES}'),
            (self.ln_eps > 0, 'ln_eps', 'must be positive'),
        ]
        for ok, name, reason in checks:
            if not ok:
                RaiseError.execute(
                    error_code='INVALID_CONFIG',
                    field=name,
                    reason=reason,
                )
        return self

    # * method: to_dict
    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data['vision_channels'] = list(self.vision_channels)
        return data

    # * method: config_hash
    def config_hash(self) -> str:
        '''
        SHA-256 over the canonical JSON of every field.
        '''

        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


# ** model: train_config
@dataclass(frozen=True)
class TrainConfig:
    '''
    The optimization recipe plus the model it trains. Defaults are the
    desk-scale setting.
    '''

    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 30
    batch_size: int = 8
    base_lr: float = 1e-4
    lr_decay: float = 0.1
    milestone: int = 20
    backbone_lr_scale: float = 0.1
    bce_weight: float = 1.0
    dice_weight: float = 1.0
    dice_smooth: float = 1.0
    clip_norm: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    threshold: float = 0.35
    seed: int = 0
    max_steps: int = 0
    train_limit: int = 0

    # * method: validate
    def validate(self) -> 'TrainConfig':
        '''
        Check the recipe invariants, then the model config.

        :return: This config.
        :rtype: TrainConfig
        '''

        checks = [
            (self.base_lr > 0, 'base_lr', 'must be positive'),
            (0 < self.lr_decay <= 1, 'lr_decay', 'must lie in (0, 1]'),
            (self.epochs >= 1, 'epochs', 'must be at least 1'),
            (0 <= self.milestone < self.epochs, 'milestone', 'must be smaller than epochs'),
            (self.batch_size >= 1, 'batch_size', 'must be at least 1'),
            (self.backbone_lr_scale > 0, 'backbone_lr_scale', 'must be positive'),
            (self.bce_weight >= 0 and self.dice_weight >= 0, 'loss weights', 'must be non-negative'),
            (self.dice_smooth >= 0, 'dice_smooth', 'must be non-negative'),
            (self.clip_norm > 0, 'clip_norm', 'must be positive'),
            (0 < self.threshold < 1, 'threshold', 'must lie in (0, 1)'),
            (self.max_steps >= 0 and self.train_limit >= 0, 'limits', 'must be non-negative'),
        ]
        for ok, name, reason in checks:
            if not ok:
                RaiseError.execute(
                    error_code='INVALID_CONFIG',
                    field=name,
                    reason=reason,
                )
        self.model.validate()
        return self

    # * method: to_flat
    def to_flat(self) -> Dict[str, Any]:
        '''
        Flatten into the single key namespace used by config files.
        '''

        flat = self.model.to_dict()
        for item in dataclasses.fields(self):
            if item.name != 'model':
                flat[item.name] = getattr(self, item.name)
        return flat

    # * method: from_flat (static)
    @staticmethod
    def from_flat(values: Dict[str, Any]) -> 'TrainConfig':
        '''
        Build a config from a flat key map; unknown keys raise INVALID_CONFIG.

        :param values: Flat key/value pairs (strings are coerced to field types).
        :type values: Dict[str, Any]
        :return: The validated config.
        :rtype: TrainConfig
        '''

        model_fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
        train_fields = {f.name: f for f in dataclasses.fields(TrainConfig) if f.name != 'model'}
        model_kwargs, train_kwargs = {}, {}
        for key, value in values.items():
            if key in model_fields:
                model_kwargs[key] = ConfigLoader.coerce(key, value, ModelConfig())
            elif key in train_fields:
                train_kwargs[key] = ConfigLoader.coerce(key, value, TrainConfig())
            else:
                RaiseError.execute(
                    error_code='INVALID_CONFIG',
                    field=key,
                    reason='unknown configuration key',
                )
        return TrainConfig(model=ModelConfig(**model_kwargs), **train_kwargs).validate()

    # * method: replace
    def replace(self, **changes) -> 'TrainConfig':
        '''
        Return a copy with flat-namespace changes applied.
        '''

        flat = self.to_flat()
        flat.update(changes)
        return TrainConfig.from_flat(flat)


# ** model: run_manifest
@dataclass
class RunManifest:
    '''
    The reproducibility record written before a command does any work.
    '''

    command: str
    config_path: Optional[str]
    config: Dict[str, Any]
    seed: Optional[int]
    output_dir: Optional[str]
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: Optional[str] = None

    # * method: write
    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + '\n')
        return path

    # * method: finish
    def finish(self, path: Path) -> Path:
        self.finished_at = datetime.now(timezone.utc).isoformat()
        return self.write(path)


# *** utils

# ** util: config_loader
class ConfigLoader:
    '''
    Resolves run configurations from the preset catalog (model.yml), an
    optional JSON/YAML file, and command-line overrides, in that order.
    '''

    # * method: catalog (static)
    @staticmethod
    @lru_cache(maxsize=1)
    def catalog() -> Dict[str, Any]:
        with open(MODEL_CONFIG_FILE, 'r', encoding='utf-8') as handle:
            return yaml.safe_load(handle)

    # * method: preset (static)
    @staticmethod
    def preset(name: str) -> Dict[str, Any]:
        '''
        Look up a preset's flat overrides.

        :param name: The preset name.
        :type name: str
        :return: A copy of the preset's key map.
        :rtype: Dict[str, Any]
        '''

        presets = ConfigLoader.catalog()['presets']
        if name not in presets:
            RaiseError.execute(
                error_code='UNKNOWN_PRESET',
                preset=name,
                choices=', '.join(sorted(presets)),
            )
        return dict(presets[name] or {})

    # * method: ablations (static)
    @staticmethod
    def ablations() -> List[Dict[str, Any]]:
        return [dict(row) for row in ConfigLoader.catalog()['ablations']]

    # * method: ablation_steps (static)
    @staticmethod
    def ablation_steps() -> int:
        return int(ConfigLoader.catalog()['ablation_steps'])

    # * method: read_file (static)
    @staticmethod
    def read_file(path: str) -> Dict[str, Any]:
        '''
        Read a flat JSON or YAML config file.

        :param path: The file path.
        :type path: str
        :return: The key map.
        :rtype: Dict[str, Any]
        '''

        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
            values = json.loads(text) if path.suffix == '.json' else yaml.safe_load(text)
        except (OSError, ValueError, yaml.YAMLError) as exc:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=str(path),
                reason=str(exc),
            )
        if not isinstance(values, dict):
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=str(path),
                reason='config file must contain a flat mapping',
            )
        return values

    # * method: resolve (static)
    @staticmethod
    def resolve(
            preset: Optional[str] = None,
            path: Optional[str] = None,
            overrides: Optional[Dict[str, Any]] = None,
        ) -> TrainConfig:
        '''
        Merge defaults ← preset ← file ← overrides (None overrides are ignored).

        :param preset: The preset name; a file's 'preset' key applies when not given.
        :type preset: str
        :param path: Optional config file.
        :type path: str
        :param overrides: Flag values.
        :type overrides: Dict[str, Any]
        :return: The validated config.
        :rtype: TrainConfig
        '''

        file_values = ConfigLoader.read_file(path) if path else {}
        preset_name = preset or file_values.pop('preset', None) or 'desk'
        file_values.pop('preset', None)

        merged = ConfigLoader.preset(preset_name)
        merged.update(file_values)
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return TrainConfig.from_flat(merged)

    # * method: coerce (static)
    @staticmethod
    def coerce(key: str, value: Any, defaults: Any) -> Any:
        '''
        Convert a raw value (possibly a CLI string) to the type of the field default.

        :param key: The field name.
        :type key: str
        :param value: The raw value.
        :type value: Any
        :param defaults: A default instance supplying the target type.
        :type defaults: Any
        :return: The coerced value.
        :rtype: Any
        '''

        target = getattr(defaults, key)
        try:
            if isinstance(target, bool):
                if isinstance(value, str):
                    lowered = value.strip().lower()
                    if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                        raise ValueError(value)
                    return lowered in ('true', '1', 'yes')
                return bool(value)
            if isinstance(target, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(value)
                return int(value)
            if isinstance(target, float):
                return float(value)
            if isinstance(target, tuple):
                items = value.split(',') if isinstance(value, str) else value
                return tuple(int(v) for v in items)
            return str(value)
        except (TypeError, ValueError):
            RaiseError.execute(
                error_code='INVALID_CONFIG',
                field=key,
                reason=f'cannot interpret {value!r} as {type(target).__name__}',
            )
