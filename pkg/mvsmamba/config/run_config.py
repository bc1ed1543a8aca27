"""
Run Configuration
Flat key=value run documents validated with marshmallow into a frozen dataclass tree
"""

import logging
import os
from dataclasses import asdict, dataclass, field, fields as dc_fields, replace
from typing import Dict, Optional, Tuple

from marshmallow import (
    RAISE,
    Schema,
    ValidationError,
    fields,
    post_load,
    validate,
    validates_schema,
)

from mvsmamba.config.constants import (
    CHANNELS,
    CONV_KERNEL,
    D_STATE,
    EVAL_THRESHOLDS,
    EXPAND,
    GROUPS,
    INTERVAL_SCALES,
    NUM_HYPOTHESES,
    NUM_SCALES,
    RESOLUTION_MULTIPLE,
)
from mvsmamba.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


class CommaList(fields.Field):
    """Comma-separated list of ints or floats; an empty value is an empty list"""

    def __init__(self, cast=int, **kwargs):
        self.cast = cast
        super().__init__(**kwargs)

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, (list, tuple)):
            items = list(value)
        else:
            text = str(value).strip()
            items = [part.strip() for part in text.split(',')] if text else []
        try:
            return tuple(self.cast(item) for item in items)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"Not a comma-separated list of {self.cast.__name__}: {value!r}") from exc

    def _serialize(self, value, attr, obj, **kwargs):
        return ','.join(_format_scalar(v) for v in value)


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ============================================================================
# CONFIG SECTIONS
# ============================================================================

@dataclass(frozen=True)
class ModelConfig:
    channels: Tuple[int, ...] = CHANNELS
    dm_scales: Tuple[int, ...] = (0,)
    sdm_scales: Tuple[int, ...] = (1,)
    use_dm: bool = True
    use_sdm: bool = True
    use_mlp: bool = True
    share_scan_weights: bool = False
    d_state: int = D_STATE
    expand: int = EXPAND
    conv_kernel: int = CONV_KERNEL
    mlp_ratio: int = 2
    reg_channels: int = 8


@dataclass(frozen=True)
class ScanConfig:
    zigzag: bool = False
    centering: str = 'reference'
    dynamic: bool = True


@dataclass(frozen=True)
class SsmConfig:
    zoh_input: bool = False


@dataclass(frozen=True)
class CascadeConfig:
    num_hypotheses: Tuple[int, ...] = NUM_HYPOTHESES
    interval_scales: Tuple[float, ...] = INTERVAL_SCALES
    groups: Tuple[int, ...] = GROUPS


@dataclass(frozen=True)
class LossConfig:
    kind: str = 'ce'


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    iters: int = 200
    seed: int = 0
    views: int = 3
    ref_views: Tuple[int, ...] = (0,)
    lr_milestones: Tuple[int, ...] = ()
    lr_gamma: float = 0.5
    log_every: int = 10


@dataclass(frozen=True)
class SceneConfig:
    num_views: int = 3
    height: int = 64
    width: int = 80
    num_planes: int = 2
    sphere: bool = True
    depth_min: float = 6.0
    depth_max: float = 14.0
    arc_degrees: float = 12.0
    radius: float = 10.0


@dataclass(frozen=True)
class EvalConfig:
    thresholds: Tuple[float, ...] = EVAL_THRESHOLDS


@dataclass(frozen=True)
class IOConfig:
    scene_dir: str = 'scene'
    out_dir: str = 'out'
    checkpoint: str = ''

    @property
    def checkpoint_path(self) -> str:
        return self.checkpoint or os.path.join(self.out_dir, 'model.ckpt')


@dataclass(frozen=True)
class NumericConfig:
    dtype: str = 'float64'


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    ssm: SsmConfig = field(default_factory=SsmConfig)
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    io: IOConfig = field(default_factory=IOConfig)
    numeric: NumericConfig = field(default_factory=NumericConfig)

    def flat(self) -> Dict[str, object]:
        """Dotted key -> value for every key"""
        out = {}
        for section in dc_fields(self):
            for key, value in asdict(getattr(self, section.name)).items():
                out[f"{section.name}.{key}"] = value
        return out

    def to_text(self) -> str:
        lines = []
        for key, value in self.flat().items():
            if isinstance(value, (list, tuple)):
                value = ','.join(_format_scalar(v) for v in value)
            else:
                value = _format_scalar(value)
            lines.append(f"{key}={value}")
        return '\n'.join(lines) + '\n'

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None) -> 'RunConfig':
        cfg = self
        if seed is not None:
            cfg = replace(cfg, train=replace(cfg.train, seed=int(seed)))
        if out is not None:
            cfg = replace(cfg, io=replace(cfg.io, out_dir=str(out)))
        return cfg


SECTIONS = {
    'model': ModelConfig, 'scan': ScanConfig, 'ssm': SsmConfig, 'cascade': CascadeConfig,
    'loss': LossConfig, 'train': TrainConfig, 'scene': SceneConfig, 'eval': EvalConfig,
    'io': IOConfig, 'numeric': NumericConfig,
}


# ============================================================================
# VALIDATION SCHEMA
# ============================================================================

class RunConfigSchema(Schema):
    """Validation schema for run configuration documents."""

    class Meta:
        unknown = RAISE

    model_channels = CommaList(data_key='model.channels', load_default=CHANNELS)
    model_dm_scales = CommaList(data_key='model.dm_scales', load_default=(0,))
    model_sdm_scales = CommaList(data_key='model.sdm_scales', load_default=(1,))
    model_use_dm = fields.Boolean(data_key='model.use_dm', load_default=True)
    model_use_sdm = fields.Boolean(data_key='model.use_sdm', load_default=True)
    model_use_mlp = fields.Boolean(data_key='model.use_mlp', load_default=True)
    model_share_scan_weights = fields.Boolean(data_key='model.share_scan_weights', load_default=False)
    model_d_state = fields.Int(data_key='model.d_state', load_default=D_STATE, validate=validate.Range(min=1))
    model_expand = fields.Int(data_key='model.expand', load_default=EXPAND, validate=validate.Range(min=1))
    model_conv_kernel = fields.Int(data_key='model.conv_kernel', load_default=CONV_KERNEL,
                                   validate=validate.Range(min=1))
    model_mlp_ratio = fields.Int(data_key='model.mlp_ratio', load_default=2, validate=validate.Range(min=1))
    model_reg_channels = fields.Int(data_key='model.reg_channels', load_default=8,
                                    validate=validate.Range(min=1))

    scan_zigzag = fields.Boolean(data_key='scan.zigzag', load_default=False)
    scan_centering = fields.Str(data_key='scan.centering', load_default='reference',
                                validate=validate.OneOf(['reference', 'source']))
    scan_dynamic = fields.Boolean(data_key='scan.dynamic', load_default=True)

    ssm_zoh_input = fields.Boolean(data_key='ssm.zoh_input', load_default=False)

    cascade_num_hypotheses = CommaList(data_key='cascade.num_hypotheses', load_default=NUM_HYPOTHESES)
    cascade_interval_scales = CommaList(cast=float, data_key='cascade.interval_scales',
                                        load_default=INTERVAL_SCALES)
    cascade_groups = CommaList(data_key='cascade.groups', load_default=GROUPS)

    loss_kind = fields.Str(data_key='loss.kind', load_default='ce', validate=validate.OneOf(['ce', 'l1']))

    train_lr = fields.Float(data_key='train.lr', load_default=0.001, validate=validate.Range(min=0))
    train_iters = fields.Int(data_key='train.iters', load_default=200, validate=validate.Range(min=0))
    train_seed = fields.Int(data_key='train.seed', load_default=0, validate=validate.Range(min=0))
    train_views = fields.Int(data_key='train.views', load_default=3, validate=validate.Range(min=2))
    train_ref_views = CommaList(data_key='train.ref_views', load_default=(0,))
    train_lr_milestones = CommaList(data_key='train.lr_milestones', load_default=())
    train_lr_gamma = fields.Float(data_key='train.lr_gamma', load_default=0.5,
                                  validate=validate.Range(min=0, min_inclusive=False))
    train_log_every = fields.Int(data_key='train.log_every', load_default=10, validate=validate.Range(min=1))

    scene_num_views = fields.Int(data_key='scene.num_views', load_default=3, validate=validate.Range(min=2))
    scene_height = fields.Int(data_key='scene.height', load_default=64, validate=validate.Range(min=1))
    scene_width = fields.Int(data_key='scene.width', load_default=80, validate=validate.Range(min=1))
    scene_num_planes = fields.Int(data_key='scene.num_planes', load_default=2,
                                  validate=validate.Range(min=1, max=3))
    scene_sphere = fields.Boolean(data_key='scene.sphere', load_default=True)
    scene_depth_min = fields.Float(data_key='scene.depth_min', load_default=6.0,
                                   validate=validate.Range(min=0, min_inclusive=False))
    scene_depth_max = fields.Float(data_key='scene.depth_max', load_default=14.0)
    scene_arc_degrees = fields.Float(data_key='scene.arc_degrees', load_default=12.0)
    scene_radius = fields.Float(data_key='scene.radius', load_default=10.0,
                                validate=validate.Range(min=0, min_inclusive=False))

    eval_thresholds = CommaList(cast=float, data_key='eval.thresholds', load_default=EVAL_THRESHOLDS)

    io_scene_dir = fields.Str(data_key='io.scene_dir', load_default='scene')
    io_out_dir = fields.Str(data_key='io.out_dir', load_default='out')
    io_checkpoint = fields.Str(data_key='io.checkpoint', load_default='')

    numeric_dtype = fields.Str(data_key='numeric.dtype', load_default='float64',
                               validate=validate.OneOf(['float64', 'float32']))

    @validates_schema
    def validate_semantics(self, data, **kwargs):
        """Cross-key rules: per-scale lists, scale indices and scene geometry"""
        errors = {}
        for name in ('model_channels', 'cascade_num_hypotheses', 'cascade_interval_scales', 'cascade_groups'):
            if len(data[name]) != NUM_SCALES:
                errors[self.fields[name].data_key] = [f"Expected {NUM_SCALES} values"]
        for name in ('model_dm_scales', 'model_sdm_scales'):
            if any(not 0 <= s < NUM_SCALES for s in data[name]):
                errors[self.fields[name].data_key] = [f"Scale indices must lie in 0..{NUM_SCALES - 1}"]
        if any(d < 2 for d in data['cascade_num_hypotheses']):
            errors['cascade.num_hypotheses'] = ["Every scale needs at least two hypotheses"]
        if len(data['model_channels']) == NUM_SCALES and len(data['cascade_groups']) == NUM_SCALES:
            if any(g < 1 or c % g for c, g in zip(data['model_channels'], data['cascade_groups'])):
                errors['cascade.groups'] = ["Groups must divide the channel width of their scale"]
        for name in ('scene_height', 'scene_width'):
            if data[name] % RESOLUTION_MULTIPLE:
                errors[self.fields[name].data_key] = [f"Must be divisible by {RESOLUTION_MULTIPLE}"]
        if data['scene_depth_max'] <= data['scene_depth_min']:
            errors['scene.depth_max'] = ["Must exceed scene.depth_min"]
        if any(v < 0 or v >= data['scene_num_views'] for v in data['train_ref_views']):
            errors['train.ref_views'] = ["Reference views must exist in the scene"]
        if errors:
            raise ValidationError(errors)

    @post_load
    def make_config(self, data, **kwargs):
        sections = {name: {} for name in SECTIONS}
        for attr, value in data.items():
            section, key = self.fields[attr].data_key.split('.', 1)
            sections[section][key] = value
        return RunConfig(**{name: SECTIONS[name](**values) for name, values in sections.items()})


def parse_text(text: str) -> Dict[str, str]:
    """
    Parse key=value lines; blank lines and '#' comments are skipped

    Raises:
        ConfigurationError: On a line without '=' or a repeated key
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigurationError("Malformed config line", details={"line": lineno, "text": raw})
        key, value = (part.strip() for part in line.split('=', 1))
        if key in values:
            raise ConfigurationError("Duplicate config key", details={"line": lineno, "key": key})
        values[key] = value
    return values


def from_mapping(values: Dict[str, object]) -> RunConfig:
    """
    Raises:
        ConfigurationError: With the marshmallow messages when validation fails
    """
    try:
        return RunConfigSchema().load(values)
    except ValidationError as e:
        raise ConfigurationError("Invalid run configuration", details={"errors": e.messages})


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """Load a run config file, or the defaults when no path is given"""
    if path is None:
        return from_mapping({})
    if not os.path.isfile(path):
        raise ConfigurationError("Config file not found", details={"path": path})
    with open(path, 'r', encoding='utf-8') as f:
        cfg = from_mapping(parse_text(f.read()))
    logger.info(f"Loaded run config from {path}")
    return cfg
