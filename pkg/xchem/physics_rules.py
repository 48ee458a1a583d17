"""
Deterministic half of the Validator: unit consistency, scaling relations and
sparsity/complementarity checks driven by a YAML registry.

Violations are data. Fatal ones make the Validator reject without asking the
chat backend; advisories are passed on to it as context.
"""
import hashlib
import logging
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Tuple

import yaml
from schema import And, Optional, Or, Schema, SchemaError, Use

from xchem.config import DEFAULT_RULES_PATH
from xchem.errors import ConfigurationError
from xchem.properties import DESCRIPTOR_BANK, TargetProperty

logger = logging.getLogger(__name__)

MIN_DESCRIPTORS = 3
MAX_DESCRIPTORS = 5
WEIGHT_SUM_TOLERANCE = 1e-3

# violation codes
CARDINALITY = 'cardinality'
WEIGHT_LENGTH = 'weight_length'
NEGATIVE_WEIGHT = 'negative_weight'
NON_FINITE_WEIGHT = 'non_finite_weight'
WEIGHT_SUM = 'weight_sum'
DUPLICATE = 'duplicate_descriptor'
UNKNOWN = 'unknown_descriptor'
ALL_TEXTUAL = 'all_textual'
TEXTUAL = 'textual_descriptor'
SCALING = 'scaling_advisory'
REDUNDANT = 'redundant_group'

exponents_schema = Or('textual', {Optional(str): int})

REGISTRY_SCHEMA = Schema({
    'version': int,
    'base_dimensions': [str],
    'signatures': {And(str, lambda s: s in DESCRIPTOR_BANK): exponents_schema},
    'targets': {Use(TargetProperty.parse): {Optional(str): int}},
    'scaling_rules': [{
        'name': str,
        'targets': [Use(TargetProperty.parse)],
        'any_of': [And(str, lambda s: s in DESCRIPTOR_BANK)],
        'note': str,
    }],
    'redundancy_groups': [{
        'name': str,
        'members': [And(str, lambda s: s in DESCRIPTOR_BANK)],
        'max_subset_size': And(int, lambda n: n > 0),
        'note': str,
    }],
})


@dataclass(frozen=True, order=True)
class Violation:
    code: str
    message: str
    fatal: bool

    def to_dict(self):
        return {'code': self.code, 'message': self.message, 'fatal': self.fatal}


@dataclass(frozen=True)
class DimensionSignature:
    exponents: Tuple[Tuple[str, int], ...]
    textual: bool = False

    def describe(self):
        if self.textual:
            return 'textual'
        terms = ['{0}^{1}'.format(dim, exp) if exp != 1 else dim
                 for dim, exp in self.exponents if exp]
        return '·'.join(terms) if terms else 'dimensionless'


@dataclass(frozen=True)
class ScalingRule:
    name: str
    targets: Tuple[TargetProperty, ...]
    favored: Tuple[str, ...]
    note: str


@dataclass(frozen=True)
class RedundancyGroup:
    name: str
    members: Tuple[str, ...]
    max_subset_size: int
    note: str


@dataclass(frozen=True)
class RuleRegistry:
    version: int
    signatures: Dict[str, DimensionSignature]
    target_dimensions: Dict[TargetProperty, DimensionSignature]
    scaling_rules: Tuple[ScalingRule, ...]
    redundancy_groups: Tuple[RedundancyGroup, ...]
    sha256: str

    @classmethod
    def from_yaml(cls, text):
        try:
            data = REGISTRY_SCHEMA.validate(yaml.safe_load(text))
        except (SchemaError, yaml.YAMLError) as error:
            raise ConfigurationError('invalid rule registry: {0}'.format(error))
        missing = set(DESCRIPTOR_BANK) - set(data['signatures'])
        if missing:
            raise ConfigurationError('rule registry lacks signatures for {0}'.format(', '.join(sorted(missing))))

        def signature(raw):
            if raw == 'textual':
                return DimensionSignature((), textual=True)
            return DimensionSignature(tuple(sorted(raw.items())))

        return cls(
            version=data['version'],
            signatures={name: signature(raw) for name, raw in data['signatures'].items()},
            target_dimensions={t: signature(raw) for t, raw in data['targets'].items()},
            scaling_rules=tuple(ScalingRule(r['name'], tuple(r['targets']), tuple(r['any_of']), r['note'])
                                for r in data['scaling_rules']),
            redundancy_groups=tuple(RedundancyGroup(g['name'], tuple(g['members']), g['max_subset_size'], g['note'])
                                    for g in data['redundancy_groups']),
            sha256=hashlib.sha256(text.encode('utf-8')).hexdigest(),
        )

    @classmethod
    def load(cls, path=None):
        path = path or DEFAULT_RULES_PATH
        try:
            with open(path, encoding='utf-8') as f:
                text = f.read()
        except OSError as error:
            raise ConfigurationError('cannot read rule registry {0}: {1}'.format(path, error))
        registry = cls.from_yaml(text)
        logger.debug('loaded rule registry v%s (%s) from %s', registry.version, registry.sha256[:12], path)
        return registry

    def is_textual(self, name):
        return self.signatures[name].textual

    def describe_target(self, target):
        target = TargetProperty.parse(target)
        signature = self.target_dimensions.get(target)
        return signature.describe() if signature else 'unspecified'

    def describe_bank(self):
        return ['{0} [{1}]'.format(name, self.signatures[name].describe()) for name in DESCRIPTOR_BANK]


@lru_cache(maxsize=None)
def default_registry():
    return RuleRegistry.load(DEFAULT_RULES_PATH)


def _duplicates(subset):
    counts = Counter(subset)
    return sorted(name for name, n in counts.items() if n > 1)


def _duplicate_violations(subset):
    return [Violation(DUPLICATE, 'descriptor {0} is selected more than once'.format(name), True)
            for name in _duplicates(subset)]


def check_cardinality_and_simplex(weights, subset):
    '''
    Cardinality, simplex and distinctness checks.

    Returns: [] iff 3 <= p <= 5, weights are finite and non-negative,
        |sum(w) - 1| <= 1e-3 and the names are distinct.
    '''
    subset = list(subset)
    weights = [float(w) for w in weights]
    violations = []
    p = len(subset)
    if not MIN_DESCRIPTORS <= p <= MAX_DESCRIPTORS:
        violations.append(Violation(
            CARDINALITY,
            'selected {0} descriptors; between {1} and {2} are required'.format(p, MIN_DESCRIPTORS, MAX_DESCRIPTORS),
            True))
    if len(weights) != p:
        violations.append(Violation(
            WEIGHT_LENGTH, '{0} weights given for {1} descriptors'.format(len(weights), p), True))
    if not all(math.isfinite(w) for w in weights):
        violations.append(Violation(NON_FINITE_WEIGHT, 'weights must be finite numbers', True))
    else:
        if any(w < 0 for w in weights):
            violations.append(Violation(NEGATIVE_WEIGHT, 'weights must be non-negative', True))
        total = sum(weights)
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            violations.append(Violation(
                WEIGHT_SUM,
                'weights sum to {0:.4f}; they must sum to 1 within {1:g}'.format(total, WEIGHT_SUM_TOLERANCE),
                True))
    violations.extend(_duplicate_violations(subset))
    return violations


def check_units(subset, target, registry=None):
    '''
    Unit-consistency layer. Textual descriptors carry no dimension that can
    relate to the target, so each one is an advisory; a subset made only of
    textual descriptors is fatal. Unknown names are fatal.
    '''
    registry = registry or default_registry()
    target = TargetProperty.parse(target)
    known = sorted({name for name in subset if name in registry.signatures})
    unknown = sorted({name for name in subset if name not in registry.signatures})
    violations = [Violation(UNKNOWN, '{0} is not in the descriptor bank'.format(name), True)
                  for name in unknown]
    textual = [name for name in known if registry.is_textual(name)]
    if known and len(textual) == len(known):
        violations.append(Violation(
            ALL_TEXTUAL,
            'every selected descriptor is textual; none has a dimension related to {0} ({1})'.format(
                target.value, registry.describe_target(target)),
            True))
    else:
        violations.extend(
            Violation(TEXTUAL, '{0} is textual and only weakly relevant to {1}'.format(name, target.value), False)
            for name in textual)
    return violations


def check_scaling(subset, target, registry=None):
    '''Advisories for scaling relations whose favored descriptors are all absent.'''
    registry = registry or default_registry()
    target = TargetProperty.parse(target)
    present = set(subset)
    advisories = []
    for rule in registry.scaling_rules:
        if target in rule.targets and not present & set(rule.favored):
            advisories.append(Violation(
                SCALING,
                '{0}: none of {1} selected for {2}'.format(rule.name, ', '.join(rule.favored), target.value),
                False))
    return advisories


def check_redundancy(subset, registry=None):
    '''Duplicates are fatal; a small subset filled by one redundancy group is an advisory.'''
    registry = registry or default_registry()
    violations = _duplicate_violations(subset)
    distinct = set(subset)
    for group in registry.redundancy_groups:
        if set(group.members) <= distinct and len(distinct) <= group.max_subset_size:
            violations.append(Violation(
                REDUNDANT,
                '{0}: {1} overlap'.format(group.name, ', '.join(group.members)),
                False))
    return violations


def evaluate_rules(subset, weights, target, registry=None):
    '''
    Run every check and return the distinct violations in a canonical order,
    so the result does not depend on the order of `subset`.
    '''
    registry = registry or default_registry()
    subset = list(subset)
    found = set()
    found.update(check_cardinality_and_simplex(weights, subset))
    found.update(check_units(subset, target, registry))
    found.update(check_scaling(subset, target, registry))
    found.update(check_redundancy(subset, registry))
    return sorted(found)


def fatal(violations):
    return [v for v in violations if v.fatal]


def advisories(violations):
    return [v for v in violations if not v.fatal]


def critique_from(violations):
    '''Human sentence fed back to the Selector as r_val.'''
    return 'Rejected by rule check: ' + '; '.join(v.message for v in violations) + '.'
