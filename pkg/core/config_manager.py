"""
配置管理模块
负责实验配置的读取、保存和管理

支持两种文件格式：JSON（*.json）与 key=value 文本（# 开头为注释，键可用点号分组）。
"""
import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .errors import ConfigError
from .logger_util import get_logger, log_error

DEFAULT_CONFIG_NAME = 'dispeig.json'

# 扁平键到分组键的映射，供 key=value 文件与命令行使用
SHORT_KEYS = {
    'experiment': 'experiment.experiment',
    'L': 'experiment.lengths',
    'W': 'experiment.disorders',
    'order': 'experiment.orders',
    'samples': 'experiment.samples',
    'seed': 'experiment.base_seed',
    'workers': 'experiment.workers',
    'out': 'experiment.output',
    'lambda_cutoff': 'sweep.lambda_cutoff_ground',
    'ci_cap': 'projection.ci_cap',
}


def _default_config() -> Dict[str, Any]:
    return {
        'model': {
            't': 0.5,
            'U': 1.0,
            'boundary': 'open',
        },
        'sweep': {
            'lambda_cutoff_ground': 1e-3,
            'lambda_cutoff_excited': 1e-4,
            'max_particles': 2,
            'max_holes': 2,
            'max_iterations': 1_000_000,
            'hopping_tolerance': 1e-10,
            'variance_tolerance': 1e-12,
            'prune_threshold': 1e-12,
        },
        'projection': {
            'ci_cap': 8000,
        },
        'experiment': {
            'experiment': 'gs_energy_error',
            'lengths': [12],
            'disorders': [5.0],
            'orders': [2],
            'samples': 1,
            'base_seed': 0,
            'workers': 1,
            'output': None,  # None 表示 results/<experiment>.csv
            'label_strategy': 'all',
            'label_count': 0,
            'temperatures': [0.5, 1.0, 2.0, 4.0, math.inf],
            'oracle_max_length': 16,
            'record_wall_time': False,
        },
    }


def parse_scalar(text: str) -> Any:
    """把文本值解析为 int / float / bool / None / 列表，其余原样返回"""
    text = text.strip()
    if ',' in text or (text.startswith('[') and text.endswith(']')):
        items = text.strip('[]').split(',')
        return [parse_scalar(item) for item in items if item.strip()]
    lowered = text.lower()
    if lowered in ('true', 'yes', 'on'):
        return True
    if lowered in ('false', 'no', 'off'):
        return False
    if lowered in ('none', 'null', ''):
        return None
    if lowered in ('inf', '+inf', 'infinity'):
        return math.inf
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _as_list(value: Any) -> list:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _as_float(value: Any) -> float:
    # JSON 无法表示 inf，保存时写成字符串
    if isinstance(value, str):
        parsed = parse_scalar(value)
        if not isinstance(parsed, (int, float)) or isinstance(parsed, bool):
            raise ConfigError(f"无法解析为数值: {value}")
        return float(parsed)
    return float(value)


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        if config_path is None:
            from .resource_path import get_config_dir
            config_path = get_config_dir() / DEFAULT_CONFIG_NAME
        self.config_file = Path(config_path)
        self._config: Dict[str, Any] = {}
        self._logger = get_logger(__name__)
        self._load()

    def _load(self):
        """从文件加载配置；文件缺失时只用默认值"""
        if self.config_file.exists():
            try:
                if self.config_file.suffix.lower() == '.json':
                    with open(self.config_file, 'r', encoding='utf-8') as f:
                        self._config = json.load(f)
                else:
                    self._config = {}
                    self._load_key_values()
            except (json.JSONDecodeError, IOError) as e:
                log_error("加载配置失败", e, self._logger)
                raise ConfigError(f"无法读取配置文件 {self.config_file}: {e}") from e
            if not isinstance(self._config, dict):
                raise ConfigError(f"配置文件顶层必须是对象: {self.config_file}")
        else:
            self._config = {}

        self._set_defaults()

    def _load_key_values(self):
        with open(self.config_file, 'r', encoding='utf-8') as f:
            for number, line in enumerate(f, 1):
                line = line.split('#', 1)[0].strip()
                if not line:
                    continue
                if '=' not in line:
                    raise ConfigError(f"{self.config_file}:{number} 缺少 '=': {line}")
                key, value = line.split('=', 1)
                self.set(key.strip(), parse_scalar(value))

    def _set_defaults(self):
        """设置默认配置值"""
        for key, value in _default_config().items():
            if key not in self._config:
                self._config[key] = value
            elif isinstance(value, dict):
                current_value = self._config.get(key)
                if not isinstance(current_value, dict):
                    current_value = {}
                    self._config[key] = current_value
                for sub_key, sub_value in value.items():
                    if sub_key not in current_value:
                        current_value[sub_key] = sub_value

    def get(self, key: str, default: Any = None) -> Any:
        """
        获取配置值（支持点号分隔的嵌套键与 SHORT_KEYS 中的短键）

        Args:
            key: 配置键，如 'sweep.max_holes' 或 'L'
            default: 默认值

        Returns:
            配置值
        """
        value = self._config
        for k in SHORT_KEYS.get(key, key).split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        """
        设置配置值（支持点号分隔的嵌套键与短键）

        Args:
            key: 配置键
            value: 配置值
        """
        keys = SHORT_KEYS.get(key, key).split('.')
        config = self._config
        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value

    def save(self, path: Optional[Union[str, Path]] = None):
        """保存配置到 JSON 文件（inf 写成字符串）"""
        target = Path(path) if path else self.config_file

        def encode(value):
            if isinstance(value, float) and math.isinf(value):
                return 'inf' if value > 0 else '-inf'
            if isinstance(value, dict):
                return {k: encode(v) for k, v in value.items()}
            if isinstance(value, list):
                return [encode(v) for v in value]
            return value

        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, 'w', encoding='utf-8') as f:
                json.dump(encode(self._config), f, indent=2, ensure_ascii=False)
        except IOError as e:
            log_error("保存配置失败", e, self._logger)

    def to_experiment_config(self):
        """
        组装 ExperimentConfig

        Raises:
            ConfigError: 取值类型或范围不合法
        """
        from .experiment import ExperimentConfig, parse_label_strategy

        strategy = self.get('experiment.label_strategy', 'all')
        count = self.get('experiment.label_count', 0)
        if isinstance(strategy, str) and strategy.startswith('random('):
            strategy, count = parse_label_strategy(strategy)

        def caps(key: str) -> Optional[int]:
            value = self.get(key)
            return None if value is None else int(value)

        try:
            return ExperimentConfig(
                experiment=str(self.get('experiment.experiment')),
                lengths=tuple(int(v) for v in _as_list(self.get('experiment.lengths'))),
                disorders=tuple(_as_float(v) for v in _as_list(self.get('experiment.disorders'))),
                orders=tuple(int(v) for v in _as_list(self.get('experiment.orders'))),
                samples=int(self.get('experiment.samples')),
                base_seed=int(self.get('experiment.base_seed')),
                workers=int(self.get('experiment.workers')),
                output=self.get('experiment.output'),
                t=_as_float(self.get('model.t')),
                U=_as_float(self.get('model.U')),
                boundary=str(self.get('model.boundary')),
                lambda_cutoff_ground=_as_float(self.get('sweep.lambda_cutoff_ground')),
                lambda_cutoff_excited=_as_float(self.get('sweep.lambda_cutoff_excited')),
                max_particles=caps('sweep.max_particles'),
                max_holes=caps('sweep.max_holes'),
                max_iterations=int(self.get('sweep.max_iterations')),
                hopping_tolerance=_as_float(self.get('sweep.hopping_tolerance')),
                variance_tolerance=_as_float(self.get('sweep.variance_tolerance')),
                prune_threshold=_as_float(self.get('sweep.prune_threshold')),
                ci_cap=int(self.get('projection.ci_cap')),
                label_strategy=strategy,
                label_count=int(count),
                temperatures=tuple(_as_float(v) for v in _as_list(self.get('experiment.temperatures'))),
                oracle_max_length=int(self.get('experiment.oracle_max_length')),
                record_wall_time=bool(self.get('experiment.record_wall_time')),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"配置取值不合法: {e}") from e
