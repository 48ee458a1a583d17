"""Config"""
import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from os.path import dirname, join
from typing import List, Optional, Tuple

import yaml
from schema import And, Optional as Opt, Or, Schema, SchemaError, Use

from xchem.errors import ConfigurationError
from xchem.properties import TargetProperty

DEFAULT_CONFIG_PATH = join(dirname(__file__), 'default.yaml')
DEFAULT_RULES_PATH = join(dirname(__file__), 'physics_rules.yaml')

# environment overrides apply to endpoint URLs only
CHAT_URL_ENV = 'XCHEM_CHAT_URL'
EMBED_URL_ENV = 'XCHEM_EMBED_URL'

positive_int = And(int, lambda n: n > 0)
positive_float = And(Use(float), lambda x: x > 0)
maybe_path = Or(None, And(str, len))

CONFIG_SCHEMA = Schema({
    'targets': And([And(str, Use(TargetProperty.parse))], len),
    'seed': int,
    'deterministic': bool,
    'jobs': positive_int,
    'paths': {
        'dataset': str,
        'embedding_cache': str,
        'selections': str,
        'transcripts': str,
        'checkpoints': str,
        'training_log': str,
        'metrics': str,
        'reports': str,
        'rules': maybe_path,
        'metrics_textfile': maybe_path,
    },
    'backends': {
        'chat_url': And(str, len),
        'embed_url': And(str, len),
        'timeout': positive_float,
        'retries': positive_int,
        'selector': {'kind': Or('http', 'table'), 'model': str, 'temperature': Use(float)},
        'validator': {'kind': Or('http', 'accept', 'reject'), 'model': str, 'temperature': Use(float)},
        'embedding': {'kind': Or('http', 'hashing', 'clip'), 'model': str, 'dim': positive_int},
    },
    'dialogue': {
        'max_rounds': positive_int,
        'condition_on_molecule': bool,
    },
    'encoder': {
        'backbone': str,
        'interaction_blocks': positive_int,
        'hidden_dim': positive_int,
        'n_radial': positive_int,
        'cutoff': positive_float,
        'basis': Or('gaussian', 'bessel'),
    },
    'fusion': {
        'text_dim': positive_int,
        'latent_dim': positive_int,
        'projection_hidden': positive_int,
        'projection_activation': Or('relu', 'identity'),
        'head': Or('mlp', 'linear'),
        'ln_eps': positive_float,
    },
    'training': {
        'variants': And([Or('base', 'fused')], len),
        'loss': Or('l1', 'mse'),
        'learning_rate': positive_float,
        'batch_size': positive_int,
        'epochs': And(int, lambda n: n >= 0),
        'folds': And(int, lambda n: n >= 2),
        'split': Or('kfold', 'holdout'),
        'val_fraction': And(Use(float), lambda x: 0 < x < 1),
        'holdout': And([Use(float)], lambda xs: len(xs) == 3 and abs(sum(xs) - 1) < 1e-6),
        'dtype': Or('float32', 'float64'),
    },
    Opt('description'): str,
})


@dataclass(frozen=True)
class EncoderConfig:
    backbone: str = 'schnet'
    interaction_blocks: int = 6
    hidden_dim: int = 128
    n_radial: int = 50
    cutoff: float = 10.0
    basis: str = 'gaussian'
    elements: Tuple[int, ...] = (1, 6, 7, 8, 9)


@dataclass(frozen=True)
class FusionConfig:
    text_dim: int = 768
    latent_dim: int = 32
    projection_hidden: int = 256
    projection_activation: str = 'relu'
    head: str = 'mlp'
    ln_eps: float = 1e-5


@dataclass(frozen=True)
class TrainConfig:
    variants: Tuple[str, ...] = ('base', 'fused')
    loss: str = 'l1'
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 35
    folds: int = 3
    split: str = 'kfold'
    val_fraction: float = 0.1
    holdout: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    dtype: str = 'float32'
    seed: int = 0
    deterministic: bool = True


@dataclass(frozen=True)
class AgentBackendConfig:
    kind: str
    model: str
    temperature: float = 0.0


@dataclass(frozen=True)
class EmbeddingBackendConfig:
    kind: str
    model: str
    dim: int = 768


@dataclass(frozen=True)
class BackendsConfig:
    chat_url: str
    embed_url: str
    timeout: float
    retries: int
    selector: AgentBackendConfig
    validator: AgentBackendConfig
    embedding: EmbeddingBackendConfig


@dataclass(frozen=True)
class DialogueConfig:
    max_rounds: int = 3
    condition_on_molecule: bool = False


@dataclass(frozen=True)
class PathsConfig:
    dataset: str
    embedding_cache: str
    selections: str
    transcripts: str
    checkpoints: str
    training_log: str
    metrics: str
    reports: str
    rules: Optional[str] = None
    metrics_textfile: Optional[str] = None

    @property
    def rules_path(self):
        return self.rules or DEFAULT_RULES_PATH


@dataclass(frozen=True)
class PipelineConfig:
    targets: Tuple[TargetProperty, ...]
    seed: int
    deterministic: bool
    jobs: int
    paths: PathsConfig
    backends: BackendsConfig
    dialogue: DialogueConfig
    encoder: EncoderConfig
    fusion: FusionConfig
    training: TrainConfig
    description: str = ''

    def to_dict(self):
        data = asdict(self)
        data['targets'] = [t.value for t in self.targets]
        return data


def deep_merge(base, override):
    '''Recursively merge `override` into a copy of `base`; lists are replaced.'''
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_yaml(path):
    try:
        with open(path, encoding='utf-8') as f:
            return yaml.safe_load(f) or {}
    except OSError as error:
        raise ConfigurationError('cannot read config {0}: {1}'.format(path, error))
    except yaml.YAMLError as error:
        raise ConfigurationError('invalid YAML in {0}: {1}'.format(path, error))


def load_config(path=None, overrides=None, environ=None):
    '''
    Build a PipelineConfig from the packaged defaults.

    Params:
        path: (str) optional user YAML merged over the defaults.
        overrides: (dict) nested values applied last (command-line flags).
        environ: mapping consulted for endpoint URL overrides; defaults to
            os.environ.

    Returns: validated PipelineConfig
    '''
    raw = read_yaml(DEFAULT_CONFIG_PATH)
    if path:
        raw = deep_merge(raw, read_yaml(path))
    environ = os.environ if environ is None else environ
    if environ.get(CHAT_URL_ENV):
        raw['backends']['chat_url'] = environ[CHAT_URL_ENV]
    if environ.get(EMBED_URL_ENV):
        raw['backends']['embed_url'] = environ[EMBED_URL_ENV]
    # command-line values win over the environment
    raw = deep_merge(raw, overrides or {})

    try:
        data = CONFIG_SCHEMA.validate(raw)
    except SchemaError as error:
        raise ConfigurationError('invalid configuration: {0}'.format(error))
    return _build(data)


def _build(data):
    backends = data['backends']
    training = dict(data['training'])
    training['variants'] = tuple(training['variants'])
    training['holdout'] = tuple(training['holdout'])
    return PipelineConfig(
        targets=tuple(data['targets']),
        seed=data['seed'],
        deterministic=data['deterministic'],
        jobs=data['jobs'],
        paths=PathsConfig(**data['paths']),
        backends=BackendsConfig(
            chat_url=backends['chat_url'],
            embed_url=backends['embed_url'],
            timeout=backends['timeout'],
            retries=backends['retries'],
            selector=AgentBackendConfig(**backends['selector']),
            validator=AgentBackendConfig(**backends['validator']),
            embedding=EmbeddingBackendConfig(**backends['embedding']),
        ),
        dialogue=DialogueConfig(**data['dialogue']),
        encoder=EncoderConfig(**data['encoder']),
        fusion=FusionConfig(**data['fusion']),
        training=TrainConfig(seed=data['seed'], deterministic=data['deterministic'], **training),
        description=data.get('description', ''),
    )


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)


def config_hash(encoder, fusion, target, variant):
    '''Stable hash of everything that shapes a model's parameters.'''
    payload = {
        'encoder': asdict(encoder),
        'fusion': asdict(fusion),
        'target': TargetProperty.parse(target).value,
        'variant': variant,
    }
    return hashlib.sha256(canonical_json(payload).encode('utf-8')).hexdigest()
