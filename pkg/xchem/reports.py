"""
MAE tables, percent-change charts and descriptor selection statistics.
"""
import json
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict

import matplotlib
matplotlib.use('Agg')
from matplotlib.backends.backend_agg import FigureCanvasAgg  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from xchem.properties import DESCRIPTOR_BANK, TARGET_ORDER, TargetProperty  # noqa: E402
from xchem.training import percent_change  # noqa: E402

logger = logging.getLogger(__name__)

VARIANTS = ('base', 'fused')
# fixed PNG metadata so identical reports are byte-identical
PNG_METADATA = {'Software': None}

# Full-QM9 MAEs of four backbones without (base) and with (fused) the
# physics-vetted text branch, in TARGET_ORDER.
PUBLISHED_MAE = {
    'SchNet': {
        'base': (0.2308, 0.3154, 0.1790, 0.1312, 0.2271, 5.4741, 0.0115, 30.9582, 28.1507),
        'fused': (0.2139, 0.4194, 0.1358, 0.1027, 0.1779, 6.2421, 0.0106, 28.3283, 32.6541),
    },
    'DimeNet++': {
        'base': (0.1747, 0.3762, 0.1317, 0.0891, 0.1726, 9.6462, 0.0067, 39.7068, 32.7486),
        'fused': (0.1640, 0.3431, 0.1125, 0.0804, 0.1489, 9.0899, 0.0071, 42.1025, 41.3099),
    },
    'Equiformer': {
        'base': (0.1154, 0.2887, 0.1380, 0.0814, 0.1627, 5.5983, 0.0094, 12.3913, 13.0388),
        'fused': (0.1245, 0.3606, 0.1126, 0.0763, 0.1457, 6.6559, 0.0096, 19.5572, 26.7677),
    },
    'FAENet': {
        'base': (0.2650, 0.4925, 0.1424, 0.0980, 0.1932, 15.0068, 0.0095, 9.8065, 11.0204),
        'fused': (0.2820, 0.4675, 0.1377, 0.1014, 0.1928, 13.4011, 0.0107, 21.2594, 19.8619),
    },
}


def _ensure_dir(path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


class MetricsReport:
    '''
    Per-fold test MAEs keyed by backbone, target and variant. Fold means are
    plain arithmetic means of the per-fold values.
    '''

    def __init__(self):
        self._folds = defaultdict(lambda: defaultdict(dict))
        self.provenance = {}

    def add(self, backbone, target, variant, fold_maes):
        if variant not in VARIANTS:
            raise ValueError('unknown variant {0!r}'.format(variant))
        values = [float(v) for v in fold_maes]
        if not values or any(v < 0 for v in values):
            raise ValueError('fold MAEs must be a non-empty list of non-negative numbers')
        self._folds[backbone][TargetProperty.parse(target)][variant] = values
        return self

    @classmethod
    def published(cls):
        report = cls()
        for backbone, variants in PUBLISHED_MAE.items():
            for variant, values in variants.items():
                for target, value in zip(TARGET_ORDER, values):
                    report.add(backbone, target, variant, [value])
        return report

    def merge(self, other):
        for backbone, targets in other._folds.items():
            for target, variants in targets.items():
                for variant, values in variants.items():
                    self.add(backbone, target, variant, values)
        return self

    @property
    def backbones(self):
        return list(self._folds)

    def targets(self, backbone):
        return [t for t in TARGET_ORDER if t in self._folds.get(backbone, {})]

    def fold_maes(self, backbone, target, variant):
        return list(self._folds.get(backbone, {}).get(TargetProperty.parse(target), {}).get(variant, []))

    def mean(self, backbone, target, variant):
        values = self.fold_maes(backbone, target, variant)
        return float(np.mean(values)) if values else None

    def percent_change(self, backbone, target):
        base = self.mean(backbone, target, 'base')
        fused = self.mean(backbone, target, 'fused')
        if base is None or fused is None or base <= 0:
            return None
        return percent_change(base, fused)

    def to_frame(self):
        '''One row per target; columns (backbone, base|fused|change_pct).'''
        columns = {}
        for backbone in self.backbones:
            for variant in VARIANTS:
                columns[(backbone, variant)] = [self.mean(backbone, t, variant) for t in TARGET_ORDER]
            columns[(backbone, 'change_pct')] = [self.percent_change(backbone, t) for t in TARGET_ORDER]
        frame = pd.DataFrame(columns, index=pd.Index([t.value for t in TARGET_ORDER], name='target'))
        return frame.dropna(how='all')

    def to_dict(self):
        return {
            'provenance': self.provenance,
            'backbones': {
                backbone: {
                    target.value: {
                        'folds': {v: self.fold_maes(backbone, target, v) for v in VARIANTS
                                  if self.fold_maes(backbone, target, v)},
                        'mean': {v: self.mean(backbone, target, v) for v in VARIANTS
                                 if self.fold_maes(backbone, target, v)},
                        'change_pct': self.percent_change(backbone, target),
                    }
                    for target in self.targets(backbone)
                }
                for backbone in self.backbones
            },
        }

    @classmethod
    def from_dict(cls, data):
        report = cls()
        report.provenance = dict(data.get('provenance', {}))
        for backbone, targets in data.get('backbones', {}).items():
            for target, entry in targets.items():
                for variant, values in entry.get('folds', {}).items():
                    report.add(backbone, target, variant, values)
        return report

    def write_csv(self, path):
        _ensure_dir(path)
        self.to_frame().round(4).to_csv(path)

    def write_json(self, path):
        _ensure_dir(path)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')

    def write_chart(self, path):
        '''Grouped bars of the percent change per target, one group member per backbone.'''
        _ensure_dir(path)
        backbones = [b for b in self.backbones if any(self.percent_change(b, t) is not None for t in TARGET_ORDER)]
        targets = [t for t in TARGET_ORDER if any(self.percent_change(b, t) is not None for b in backbones)]
        figure = Figure(figsize=(max(6.0, 1.2 * len(targets) + 2), 4.0))
        FigureCanvasAgg(figure)
        axes = figure.add_subplot(1, 1, 1)
        width = 0.8 / max(1, len(backbones))
        x = np.arange(len(targets))
        for i, backbone in enumerate(backbones):
            values = [self.percent_change(backbone, t) for t in targets]
            values = [np.nan if v is None else v for v in values]
            axes.bar(x + (i - (len(backbones) - 1) / 2) * width, values, width, label=backbone)
        axes.axhline(0.0, color='black', linewidth=0.8)
        axes.set_xticks(x)
        axes.set_xticklabels([t.value for t in targets])
        axes.set_ylabel('change in MAE (%)')
        if backbones:
            axes.legend(frameon=False)
        figure.tight_layout()
        figure.savefig(path, format='png', dpi=150, metadata=PNG_METADATA)


@dataclass
class SelectionStats:
    '''Per target and descriptor: times selected, and mean weight when selected.'''
    counts: Dict[TargetProperty, Dict[str, int]] = field(default_factory=dict)
    importance: Dict[TargetProperty, Dict[str, float]] = field(default_factory=dict)

    def count(self, target, descriptor):
        return self.counts.get(TargetProperty.parse(target), {}).get(descriptor, 0)

    def mean_importance(self, target, descriptor):
        return self.importance.get(TargetProperty.parse(target), {}).get(descriptor, 0.0)

    def to_frame(self):
        '''Two rows per target (count, importance), one column per descriptor.'''
        rows = []
        index = []
        for target in TARGET_ORDER:
            rows.append([self.count(target, d) for d in DESCRIPTOR_BANK])
            index.append((target.value, 'count'))
            rows.append([round(self.mean_importance(target, d), 4) for d in DESCRIPTOR_BANK])
            index.append((target.value, 'importance'))
        return pd.DataFrame(rows, columns=list(DESCRIPTOR_BANK),
                            index=pd.MultiIndex.from_tuples(index, names=['target', 'row']))

    def write_csv(self, path):
        _ensure_dir(path)
        self.to_frame().to_csv(path)


def selection_stats(selections):
    '''
    Tally accepted selections, fallbacks included. The result does not
    depend on the order of `selections`.
    '''
    counts = {t: {d: 0 for d in DESCRIPTOR_BANK} for t in TARGET_ORDER}
    weights = {t: {d: [] for d in DESCRIPTOR_BANK} for t in TARGET_ORDER}
    for selection in selections:
        for name, weight in zip(selection.subset, selection.weights):
            if name not in counts[selection.target]:
                logger.warning('selection for %s names unknown descriptor %s', selection.molecule_id, name)
                continue
            counts[selection.target][name] += 1
            weights[selection.target][name].append(float(weight))
    importance = {
        t: {d: (math.fsum(weights[t][d]) / counts[t][d] if counts[t][d] else 0.0) for d in DESCRIPTOR_BANK}
        for t in TARGET_ORDER
    }
    return SelectionStats(counts, importance)
