"""
.. module:: configuration
    :synopsis: Load, override, validate and hash experiment files

An experiment file is YAML with the sections of :data:`constants.DEFAULTS`.
Missing keys take their default, unknown ones are rejected.
"""
import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, make_dataclass
from functools import partial

import yaml

from .constants import ATTACKS, DEFAULTS, DEFENSES, PERTURBATIONS
from .conv import FilterLayerSpec
from .errors import ConfigurationError

# Keys whose default is None, with the type they take when set
OPTIONAL_TYPES = {
    'attack.train_epochs': int,
    'attack.poison_label': int,
    'attack.filter_input_size': int,
    'attack.fang_lambda': float,
    'defense.f': int,
    'defense.assumed_fraction': float,
    'defense.m': int,
    'defense.k': int,
    'defense.reject': int,
}

DATASETS = ('blobs', 'fashion', 'idx')
PRECISIONS = ('float64', 'float32')


def _section_class(section, title):
    fields = [(key, object, field(default_factory=partial(copy.deepcopy,
                                                          value)))
              for key, value in DEFAULTS[section].items()]
    return make_dataclass(title, fields)


ExperimentSection = _section_class('experiment', 'ExperimentSection')
DatasetSection = _section_class('dataset', 'DatasetSection')
ModelSection = _section_class('model', 'ModelSection')
AttackSection = _section_class('attack', 'AttackSection')
DefenseSection = _section_class('defense', 'DefenseSection')
MetricsSection = _section_class('metrics', 'MetricsSection')

SECTIONS = {
    'experiment': ExperimentSection,
    'dataset': DatasetSection,
    'model': ModelSection,
    'attack': AttackSection,
    'defense': DefenseSection,
    'metrics': MetricsSection,
}


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    attack: AttackSection = field(default_factory=AttackSection)
    defense: DefenseSection = field(default_factory=DefenseSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        return config_hash(self)

    def derived_f(self):
        return derived_f(self)

    def validate(self):
        validate(self)
        return self


def _coerce(key, default, value):
    """Check `value` against the type of the default of `key`"""
    if value is None:
        if key in OPTIONAL_TYPES:
            return None
        raise ConfigurationError("may not be null", key)
    if key == 'dataset.beta' and value == 'iid':
        return value
    kind = OPTIONAL_TYPES.get(key, type(default))
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigurationError("expected true or false, got %r" % (
                value,), key)
        return value
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError("expected an integer, got %r" % (
                value,), key)
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError("expected a number, got %r" % (
                value,), key)
        if not math.isfinite(value):
            raise ConfigurationError("must be finite", key)
        return float(value)
    if kind is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError("expected a list, got %r" % (value,),
                                     key)
        return [_coerce(key + '[]', 0, item) for item in value]
    if not isinstance(value, kind):
        raise ConfigurationError("expected a %s, got %r" % (
            kind.__name__, value), key)
    return value


def from_dict(data):
    """Build a (not yet validated) configuration from nested dicts"""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigurationError("an experiment file is a mapping of"
                                 " sections")
    sections = {}
    for name, values in data.items():
        if name not in SECTIONS:
            raise ConfigurationError("unknown section", str(name))
        if values is None:
            values = {}
        if not isinstance(values, dict):
            raise ConfigurationError("a section is a mapping", name)
        for key in values:
            if key not in DEFAULTS[name]:
                raise ConfigurationError("unknown key", '%s.%s' % (name, key))
        sections[name] = SECTIONS[name](**{
            key: _coerce('%s.%s' % (name, key), DEFAULTS[name][key], value)
            for key, value in values.items()})
    config = ExperimentConfig(**sections)
    if config.defense.kind == 'none':
        config.defense.kind = 'fedavg'
    return config


def parse_override(text):
    """Split ``section.key=value``, the value read as YAML"""
    if '=' not in text:
        raise ConfigurationError("override %r is not key=value" % text)
    path, raw = text.split('=', 1)
    parts = path.strip().split('.')
    if len(parts) != 2:
        raise ConfigurationError("override keys are section.key", path)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as error:
        raise ConfigurationError("unreadable value (%s)" % error, path)
    return tuple(parts), value


def apply_overrides(data, overrides):
    """Return a copy of the nested dict `data` with the overrides set"""
    data = copy.deepcopy(data or {})
    for item in overrides:
        if isinstance(item, str):
            (section, key), value = parse_override(item)
        else:
            (section, key), value = item
        if not isinstance(data.get(section), dict):
            data[section] = {}
        data[section][key] = value
    return data


def load_config(path=None, overrides=()):
    """Read, override and validate an experiment file"""
    data = {}
    if path:
        try:
            with open(path) as stream:
                data = yaml.safe_load(stream)
        except OSError as error:
            raise ConfigurationError("cannot read %s (%s)" % (
                path, error.strerror), 'config')
        except yaml.YAMLError as error:
            raise ConfigurationError("invalid YAML in %s (%s)" % (
                path, error), 'config')
    return from_dict(apply_overrides(data, overrides)).validate()


def with_values(config, overrides):
    """Copy of a configuration with ((section, key), value) pairs applied"""
    return from_dict(apply_overrides(config.to_dict(), overrides)).validate()


def baseline_of(config):
    """The attack-free, defense-free twin of a configuration"""
    return with_values(config, [(('attack', 'kind'), 'none'),
                                (('defense', 'kind'), 'fedavg')])


def config_hash(config):
    """
    SHA-256 of every semantic field. The seed and the run name are left
    out: runs are told apart by (hash, seed).
    """
    data = config.to_dict()
    data['experiment'].pop('seed')
    data['experiment'].pop('name')
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def derived_f(config):
    """Number of attackers per round the server assumes"""
    defense = config.defense
    if defense.f is not None:
        return defense.f
    fraction = defense.assumed_fraction
    if fraction is None:
        fraction = config.experiment.attacker_fraction
    return int(math.floor(fraction * config.experiment.per_round + 0.5))


def _require(condition, message, key):
    if not condition:
        raise ConfigurationError(message, key)


def validate(config):
    """Raise a ConfigurationError naming the first invalid field"""
    exp = config.experiment
    _require(exp.clients >= 1, "must be positive", 'experiment.clients')
    _require(1 <= exp.per_round <= exp.clients,
             "must lie in [1, clients]", 'experiment.per_round')
    _require(exp.rounds >= 1, "must be positive", 'experiment.rounds')
    _require(0 <= exp.attacker_fraction < 0.5,
             "attackers must stay below half of the clients",
             'experiment.attacker_fraction')
    _require(exp.eval_interval >= 1, "must be positive",
             'experiment.eval_interval')
    _require(exp.checkpoint_interval >= 0, "must be non-negative",
             'experiment.checkpoint_interval')

    data = config.dataset
    _require(data.name in DATASETS, "one of %s" % (DATASETS,),
             'dataset.name')
    _require(data.classes >= 2, "at least 2 classes", 'dataset.classes')
    _require(data.per_class >= 1 and data.test_per_class >= 1,
             "must be positive", 'dataset.per_class')
    _require(data.image_side >= 1, "must be positive", 'dataset.image_side')
    _require(data.noise >= 0, "must be non-negative", 'dataset.noise')
    _require(data.beta == 'iid' or data.beta > 0,
             "a positive number or iid", 'dataset.beta')
    _require(0 < data.subsample <= 1, "must lie in (0, 1]",
             'dataset.subsample')
    _require(data.reference_size >= 1, "must be positive",
             'dataset.reference_size')
    if data.name != 'blobs':
        for key in ('train_images', 'train_labels', 'test_images',
                    'test_labels'):
            _require(getattr(data, key), "an IDX dataset needs this path",
                     'dataset.' + key)

    model = config.model
    _require(all(width >= 0 for width in model.hidden),
             "widths must be non-negative", 'model.hidden')
    _require(model.learning_rate > 0, "must be positive",
             'model.learning_rate')
    _require(model.local_epochs >= 0, "must be non-negative",
             'model.local_epochs')
    _require(model.batch_size >= 1, "must be positive", 'model.batch_size')
    _require(model.precision in PRECISIONS, "one of %s" % (PRECISIONS,),
             'model.precision')

    _validate_attack(config)
    _validate_defense(config)
    return config


def _validate_attack(config):
    attack = config.attack
    _require(attack.kind in ATTACKS, "one of %s" % (ATTACKS,), 'attack.kind')
    _require(attack.samples >= 1, "must be positive", 'attack.samples')
    _require(attack.epochs >= 0, "must be non-negative", 'attack.epochs')
    _require(attack.learning_rate > 0, "must be positive",
             'attack.learning_rate')
    _require(attack.train_epochs is None or attack.train_epochs >= 0,
             "must be non-negative", 'attack.train_epochs')
    _require(attack.reg_weight >= 0, "must be non-negative",
             'attack.reg_weight')
    _require(attack.poison_label is None or
             0 <= attack.poison_label < config.dataset.classes,
             "must lie in [0, classes)", 'attack.poison_label')
    _require(attack.generator_noise_dim >= 1 and
             attack.generator_hidden >= 1, "must be positive",
             'attack.generator_hidden')
    _require(attack.generator_activation in ('tanh', 'relu'),
             "tanh or relu", 'attack.generator_activation')
    _require(attack.perturbation in PERTURBATIONS,
             "one of %s" % (PERTURBATIONS,), 'attack.perturbation')
    _require(attack.fang_lambda is None or attack.fang_lambda >= 0,
             "must be non-negative", 'attack.fang_lambda')
    if attack.kind == 'dfa_r':
        # The constructor enforces a = b(St+1) - 2P + J
        FilterLayerSpec(attack.filter_kernel, attack.filter_stride,
                        attack.filter_padding, config.dataset.image_side,
                        1, attack.filter_input_size)


def _validate_defense(config):
    defense = config.defense
    per_round = config.experiment.per_round
    _require(defense.kind in DEFENSES, "one of %s" % (DEFENSES,),
             'defense.kind')
    _require(defense.alpha >= 0, "must be non-negative", 'defense.alpha')
    _require(defense.assumed_fraction is None or
             0 <= defense.assumed_fraction < 0.5, "must lie in [0, 0.5)",
             'defense.assumed_fraction')
    f = derived_f(config)
    _require(f >= 0, "must be non-negative", 'defense.f')
    if defense.kind in ('krum', 'mkrum'):
        _require(per_round - f - 2 >= 1,
                 "Krum needs per_round - f - 2 >= 1 (per_round %d, f %d)" % (
                     per_round, f), 'defense.f')
        _require(defense.m is None or 1 <= defense.m <= per_round,
                 "must lie in [1, per_round]", 'defense.m')
    elif defense.kind == 'bulyan':
        _require(per_round >= 3, "Bulyan needs at least 3 updates",
                 'experiment.per_round')
    elif defense.kind == 'trmean':
        k = defense.k if defense.k is not None else f
        _require(k >= 0 and 2 * k < per_round,
                 "trimming needs 2k < per_round", 'defense.k')
    elif defense.kind == 'refd':
        reject = defense.reject if defense.reject is not None else f
        _require(0 <= reject < per_round, "must lie in [0, per_round)",
                 'defense.reject')
        _require(config.dataset.reference_size >= config.dataset.classes,
                 "at least one reference sample per class",
                 'dataset.reference_size')
