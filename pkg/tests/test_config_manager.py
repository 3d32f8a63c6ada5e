"""配置管理的测试"""
import json
import math

import pytest

from core.config_manager import ConfigManager, parse_scalar
from core.errors import ConfigError


def test_parse_scalar():
    assert parse_scalar(' 8 ') == 8
    assert parse_scalar('2.5') == 2.5
    assert parse_scalar('inf') == math.inf
    assert parse_scalar('None') is None
    assert parse_scalar('yes') is True
    assert parse_scalar('8, 10') == [8, 10]
    assert parse_scalar('[1.0, inf]') == [1.0, math.inf]
    assert parse_scalar('random(5)') == 'random(5)'


def test_defaults_when_file_missing(tmp_path):
    manager = ConfigManager(tmp_path / 'missing.json')
    assert manager.get('model.t') == 0.5
    assert manager.get('L') == [12]
    assert manager.get('sweep.unknown', 'fallback') == 'fallback'
    config = manager.to_experiment_config()
    assert config.experiment == 'gs_energy_error'
    assert config.lengths == (12,)
    assert config.temperatures[-1] == math.inf
    assert config.max_particles == 2 and config.max_holes == 2


def test_json_file_merges_with_defaults(tmp_path):
    path = tmp_path / 'dispeig.json'
    path.write_text(json.dumps({'model': {'U': 0.0}, 'experiment': {'lengths': [6, 8]}}),
                    encoding='utf-8')
    manager = ConfigManager(path)
    assert manager.get('model.U') == 0.0
    assert manager.get('model.t') == 0.5
    config = manager.to_experiment_config()
    assert config.U == 0.0
    assert config.lengths == (6, 8)
    assert config.samples == 1


def test_key_value_file(tmp_path):
    path = tmp_path / 'run.conf'
    path.write_text('\n'.join([
        '# 激发态方差扫描',
        'experiment = thermal_variance',
        'L = 8, 10',
        'W = 3',
        'samples = 4   # 每个 (L, W) 的样本数',
        'sweep.max_holes = none',
        'experiment.label_strategy = random(5)',
        'experiment.temperatures = 1, inf',
        '',
    ]), encoding='utf-8')
    config = ConfigManager(path).to_experiment_config()
    assert config.experiment == 'thermal_variance'
    assert config.lengths == (8, 10)
    assert config.disorders == (3.0,)
    assert config.samples == 4
    assert config.max_holes is None
    assert (config.label_strategy, config.label_count) == ('random', 5)
    assert config.temperatures == (1.0, math.inf)


def test_save_and_reload_keeps_infinity(tmp_path):
    manager = ConfigManager(tmp_path / 'a.json')
    manager.set('seed', 42)
    target = tmp_path / 'saved' / 'b.json'
    manager.save(target)
    raw = json.loads(target.read_text(encoding='utf-8'))
    assert raw['experiment']['temperatures'][-1] == 'inf'
    assert raw['experiment']['base_seed'] == 42
    config = ConfigManager(target).to_experiment_config()
    assert config.base_seed == 42
    assert config.temperatures[-1] == math.inf


def test_invalid_files(tmp_path):
    broken = tmp_path / 'broken.json'
    broken.write_text('{"model": ', encoding='utf-8')
    with pytest.raises(ConfigError):
        ConfigManager(broken)

    not_object = tmp_path / 'list.json'
    not_object.write_text('[1, 2]', encoding='utf-8')
    with pytest.raises(ConfigError):
        ConfigManager(not_object)

    missing_equals = tmp_path / 'bad.conf'
    missing_equals.write_text('L 8\n', encoding='utf-8')
    with pytest.raises(ConfigError):
        ConfigManager(missing_equals)


def test_invalid_values(tmp_path):
    manager = ConfigManager(tmp_path / 'missing.json')
    manager.set('samples', 'many')
    with pytest.raises(ConfigError):
        manager.to_experiment_config()

    manager = ConfigManager(tmp_path / 'missing.json')
    manager.set('experiment.temperatures', ['warm'])
    with pytest.raises(ConfigError):
        manager.to_experiment_config()


def test_default_location_follows_environment(tmp_path, monkeypatch):
    monkeypatch.setenv('DISPEIG_CONFIG_DIR', str(tmp_path))
    (tmp_path / 'dispeig.json').write_text(json.dumps({'experiment': {'workers': 3}}),
                                           encoding='utf-8')
    assert ConfigManager().get('workers') == 3
