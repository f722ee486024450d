"""
Plain-text 'key = value' configuration files
"""
from __future__ import annotations

from classes.data_classes import ModelConfig, TrainConfig, PriorProviderConfig
from classes.errors import ConfigError
from utils.convert import parse_value

LIST_KEYS = ('blocks_per_stage', 'heads_per_stage', 'betas', 'prior_kinds')

def _model_keys() -> set:
    return {key for key in ModelConfig().to_dict() if key != 'prior'}

def _prior_keys() -> set:
    return {f'prior_{key}' for key in PriorProviderConfig().to_dict()} | {'prior_d_s'}

def _train_keys() -> set:
    return set(TrainConfig().to_dict())

def parse_config_text(text: str, source: str = '<text>') -> dict:
    """
    Parses 'key = value' lines; '#' starts a comment, blank lines are ignored
    :param text: file contents
    :param source: name used in error messages
    :return: dict key -> converted value
    """
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f'{source}:{number}: expected "key = value", got {line!r}')
        value = parse_value(raw)
        if key in LIST_KEYS and not isinstance(value, list):
            value = [value]
        values[key] = value
    return values

def split_config(values: dict) -> (ModelConfig, TrainConfig):
    """
    Routes keys to ModelConfig (prior_* to its PriorProviderConfig) and TrainConfig
    :param values: parsed key -> value
    :return: (ModelConfig, TrainConfig), not yet validated
    """
    model_keys, prior_keys, train_keys = _model_keys(), _prior_keys(), _train_keys()
    unknown = sorted(set(values) - model_keys - prior_keys - train_keys)
    if unknown:
        raise ConfigError(f'unknown config keys: {unknown}')

    model_data = {key: values[key] for key in model_keys if key in values}
    model_data['prior'] = {key[len('prior_'):]: values[key] for key in prior_keys if key in values}
    train_data = {key: values[key] for key in train_keys if key in values}
    return ModelConfig(model_data), TrainConfig(train_data)

def load_config(path: str) -> (ModelConfig, TrainConfig):
    with open(path, 'r', encoding='utf-8') as f:
        return split_config(parse_config_text(f.read(), source=path))

def _format(value) -> str:
    if isinstance(value, (list, tuple)):
        return ','.join(_format(v) for v in value)
    return str(value)

def config_echo(model_cfg: ModelConfig, train_cfg: TrainConfig = None) -> str:
    """
    'key = value' text that load_config / parse_config_text read back
    """
    lines = []
    for key, value in model_cfg.to_dict().items():
        if key == 'prior':
            lines.extend(f'prior_{k} = {_format(v)}' for k, v in value.items())
        else:
            lines.append(f'{key} = {_format(value)}')
    if train_cfg is not None:
        lines.extend(f'{key} = {_format(value)}' for key, value in train_cfg.to_dict().items())
    return '\n'.join(lines) + '\n'
