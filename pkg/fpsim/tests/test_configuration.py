"""tests for the experiment files"""
import os

import pytest

from ..configuration import (baseline_of, from_dict, load_config,
                             parse_override, with_values)
from ..errors import ConfigurationError
from .custom_fixtures import run_root, tiny_config, write_config  # noqa: F401


def test_defaults_are_valid():
    config = from_dict({}).validate()
    assert config.experiment.clients == 100
    assert config.derived_f() == 2
    assert config.attack.poison_label is None


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigurationError) as info:
        from_dict({'attack': {'kind': 'lie', 'strength': 3}})
    assert info.value.field == 'attack.strength'
    with pytest.raises(ConfigurationError):
        from_dict({'plots': {}})


def test_types_are_checked():
    with pytest.raises(ConfigurationError) as info:
        from_dict({'experiment': {'rounds': 'many'}})
    assert info.value.field == 'experiment.rounds'
    config = from_dict({'experiment': {'rounds': 4.0},
                        'dataset': {'beta': 'iid'}}).validate()
    assert config.experiment.rounds == 4
    assert config.dataset.beta == 'iid'


@pytest.mark.parametrize('data, field', [
    ({'experiment': {'attacker_fraction': 0.5}},
     'experiment.attacker_fraction'),
    ({'experiment': {'per_round': 101}}, 'experiment.per_round'),
    ({'dataset': {'beta': 0.0}}, 'dataset.beta'),
    ({'attack': {'kind': 'backdoor'}}, 'attack.kind'),
    ({'attack': {'kind': 'dfa_r', 'filter_input_size': 10}},
     'attack.filter'),
    ({'defense': {'kind': 'foolsgold'}}, 'defense.kind'),
])
def test_invalid_values(data, field):
    with pytest.raises(ConfigurationError) as info:
        from_dict(data).validate()
    assert info.value.field == field


def test_defense_preconditions():
    with pytest.raises(ConfigurationError) as info:
        tiny_config(defense={'kind': 'mkrum', 'f': 2})
    assert info.value.field == 'defense.f'
    with pytest.raises(ConfigurationError):
        tiny_config(defense={'kind': 'trmean', 'k': 2})
    with pytest.raises(ConfigurationError):
        tiny_config(defense={'kind': 'refd', 'reject': 4})


def test_none_defense_is_fedavg():
    assert tiny_config(defense={'kind': 'none'}).defense.kind == 'fedavg'


def test_derived_f():
    assert tiny_config().derived_f() == 1
    assert tiny_config(defense={'f': 0}).derived_f() == 0
    assert tiny_config(defense={'assumed_fraction': 0.4}).derived_f() == 2


def test_parse_override():
    assert parse_override('defense.kind=median') == (('defense', 'kind'),
                                                     'median')
    assert parse_override('dataset.beta=[0.1, 0.5]') == (('dataset', 'beta'),
                                                         [0.1, 0.5])
    with pytest.raises(ConfigurationError):
        parse_override('defense.kind')
    with pytest.raises(ConfigurationError):
        parse_override('kind=median')


def test_load_config(run_root):
    path = write_config(run_root)
    config = load_config(path, ['defense.kind=median',
                                (('attack', 'kind'), 'dfa_r')])
    assert config.defense.kind == 'median'
    assert config.attack.kind == 'dfa_r'
    with pytest.raises(ConfigurationError):
        load_config(os.path.join(run_root, 'missing.yaml'))
    broken = os.path.join(run_root, 'broken.yaml')
    with open(broken, 'w') as stream:
        stream.write('experiment: [unclosed\n')
    with pytest.raises(ConfigurationError):
        load_config(broken)


def test_hash_covers_semantics_only():
    config = tiny_config()
    reordered = from_dict({'model': {'batch_size': 8, 'learning_rate': 0.1},
                           **{name: values for name, values in
                              tiny_config().to_dict().items()
                              if name != 'model'}}).validate()
    assert reordered.config_hash() == config.config_hash()
    reseeded = with_values(config, [(('experiment', 'seed'), 99),
                                    (('experiment', 'name'), 'other')])
    assert reseeded.config_hash() == config.config_hash()
    changed = with_values(config, [(('dataset', 'beta'), 0.9)])
    assert changed.config_hash() != config.config_hash()


def test_baseline_twin():
    config = tiny_config(attack={'kind': 'lie'}, defense={'kind': 'median'})
    twin = baseline_of(config)
    assert twin.attack.kind == 'none'
    assert twin.defense.kind == 'fedavg'
    assert twin.dataset.beta == config.dataset.beta
