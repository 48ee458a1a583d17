"""
Training, evaluation and fold runs for one (target, variant) pair.

The agents are frozen: fused runs read precomputed physics embeddings and
never call a chat backend.
"""
import copy
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import torch
from torch import nn

from xchem.config import EncoderConfig, FusionConfig, TrainConfig, config_hash
from xchem.dataset import holdout_split, make_folds, split_fold
from xchem.encoder import SchNetEncoder, build_graph, collate
from xchem.errors import ConfigurationError, TrainingDivergedError, XChemError
from xchem.fusion import FusionHead, PropertyModel
from xchem.properties import TargetProperty

logger = logging.getLogger(__name__)

DTYPES = {'float32': torch.float32, 'float64': torch.float64}


@dataclass
class Sample:
    molecule_id: str
    graph: object
    y: float
    t_phys: Optional[np.ndarray] = None


@dataclass
class TrainResult:
    model: PropertyModel
    losses: List[float]
    val_maes: List[float]
    best_epoch: int
    config_hash: str


@dataclass
class FoldResult:
    fold: int
    mae: float
    best_epoch: int
    losses: List[float]
    val_maes: List[float]
    sizes: Dict[str, int] = field(default_factory=dict)
    checkpoint: Optional[str] = None

    def to_dict(self):
        return asdict(self)


def set_seed(seed, deterministic=True):
    torch.manual_seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.use_deterministic_algorithms(deterministic, warn_only=True)


def build_samples(records, target, cutoff, physics=None):
    '''
    One Sample per molecule carrying `target`. With `physics` (molecule id
    -> t_phys) molecules lacking an embedding are skipped.
    '''
    target = TargetProperty.parse(target)
    samples = []
    for molecule, _ in records:
        if target not in molecule.targets:
            logger.warning('%s has no %s label; skipped', molecule.id, target.value)
            continue
        t_phys = None
        if physics is not None:
            t_phys = physics.get(molecule.id)
            if t_phys is None:
                logger.warning('%s has no physics embedding for %s; skipped', molecule.id, target.value)
                continue
        samples.append(Sample(molecule.id, build_graph(molecule, cutoff), molecule.targets[target], t_phys))
    return samples


def _batch(samples, dtype, fused):
    batch = collate([s.graph for s in samples])
    y = torch.tensor([s.y for s in samples], dtype=torch.float64)
    t_phys = None
    if fused:
        t_phys = torch.as_tensor(np.stack([s.t_phys for s in samples]), dtype=dtype)
    return batch, y, t_phys


def _loss_fn(name):
    if name == 'l1':
        return nn.L1Loss()
    if name == 'mse':
        return nn.MSELoss()
    raise ConfigurationError('unknown loss {0!r}'.format(name))


def standardization(values):
    '''(mean, std) of training labels; std falls back to 1 for constant labels.'''
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std())
    return mean, std if std > 0 and math.isfinite(std) else 1.0


def build_model(target, variant, encoder_config, fusion_config, mean=0.0, std=1.0, dtype=torch.float32):
    encoder = SchNetEncoder(encoder_config)
    head = FusionHead(fusion_config, encoder.out_dim, variant)
    return PropertyModel(encoder, head, target, mean, std).to(dtype)


def mean_absolute_error(predictions, labels):
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise ValueError('{0} predictions for {1} labels'.format(predictions.shape, labels.shape))
    if labels.size == 0:
        raise ValueError('MAE of an empty set is undefined')
    return float(np.mean(np.abs(predictions - labels)))


def percent_change(base_mae, fused_mae):
    '''100 (fused - base) / base; negative means the fused model is better.'''
    if not base_mae > 0:
        raise ValueError('base MAE must be positive, got {0}'.format(base_mae))
    return 100.0 * (fused_mae - base_mae) / base_mae


def predict_values(model, samples, batch_size=256):
    dtype = next(model.parameters()).dtype
    model.eval()
    values = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start:start + batch_size]
            batch, _, t_phys = _batch(chunk, dtype, model.head.fused)
            values.extend(model.destandardize(model(batch, t_phys)).tolist())
    return values


def evaluate(model, samples, batch_size=256):
    '''MAE in target units over `samples`.'''
    if not samples:
        raise XChemError('cannot evaluate on an empty split')
    return mean_absolute_error(predict_values(model, samples, batch_size), [s.y for s in samples])


def train(train_samples, val_samples, target, variant, encoder_config=None, fusion_config=None, config=None):
    '''
    Adam on standardized labels with a seeded batch order. The returned
    model carries the parameters of the epoch with the lowest validation
    MAE; epoch 0 is the initialization.

    Raises: TrainingDivergedError when the loss stops being finite
    '''
    encoder_config = encoder_config or EncoderConfig()
    fusion_config = fusion_config or FusionConfig()
    config = config or TrainConfig()
    target = TargetProperty.parse(target)
    if not train_samples:
        raise XChemError('cannot train {0}/{1} on an empty training set'.format(target.value, variant))

    set_seed(config.seed, config.deterministic)
    dtype = DTYPES[config.dtype]
    mean, std = standardization([s.y for s in train_samples])
    model = build_model(target, variant, encoder_config, fusion_config, mean, std, dtype)
    fused = model.head.fused
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = _loss_fn(config.loss)
    generator = torch.Generator().manual_seed(config.seed)

    def validation_mae():
        return evaluate(model, val_samples) if val_samples else float('inf')

    best_mae = validation_mae()
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = 0
    losses, val_maes = [], []
    for epoch in range(1, config.epochs + 1):
        model.train()
        order = torch.randperm(len(train_samples), generator=generator).tolist()
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            chunk = [train_samples[i] for i in order[start:start + config.batch_size]]
            batch, y, t_phys = _batch(chunk, dtype, fused)
            y = ((y - mean) / std).to(dtype)
            optimizer.zero_grad()
            loss = loss_fn(model(batch, t_phys), y)
            if not torch.isfinite(loss):
                raise TrainingDivergedError('{0}/{1}: loss is {2} at epoch {3}, batch starting {4}'.format(
                    target.value, variant, loss.item(), epoch, start))
            loss.backward()
            optimizer.step()
            total += loss.item() * len(chunk)
            seen += len(chunk)
        losses.append(total / seen)
        val_mae = validation_mae()
        val_maes.append(val_mae)
        if val_mae < best_mae or (not val_samples and epoch == config.epochs):
            best_mae, best_epoch = val_mae, epoch
            best_state = copy.deepcopy(model.state_dict())
        logger.info('%s/%s epoch %d: train loss %.5f, val MAE %.5f', target.value, variant, epoch, losses[-1], val_mae)

    model.load_state_dict(best_state)
    digest = config_hash(encoder_config, fusion_config, target, variant)
    return TrainResult(model, losses, val_maes, best_epoch, digest)


#### checkpoints ####

def save_checkpoint(path, result):
    model = result.model
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    torch.save({
        'config_hash': result.config_hash,
        'target': model.target.value,
        'variant': model.variant,
        'dtype': str(next(model.parameters()).dtype).replace('torch.', ''),
        'mean': model.mean,
        'std': model.std,
        'best_epoch': result.best_epoch,
        'losses': list(result.losses),
        'encoder': model.encoder.state_dict(),
        'head': model.head.state_dict(),
    }, path)
    logger.debug('saved checkpoint %s', path)


def load_checkpoint(path, encoder_config, fusion_config, target, variant):
    '''
    Rebuild a PropertyModel from `path`.

    Raises: ConfigurationError when the checkpoint was trained under a
        different encoder/fusion/target/variant configuration.
    '''
    target = TargetProperty.parse(target)
    try:
        data = torch.load(path, map_location='cpu')
    except (OSError, RuntimeError) as error:
        raise ConfigurationError('cannot read checkpoint {0}: {1}'.format(path, error))
    expected = config_hash(encoder_config, fusion_config, target, variant)
    if data.get('config_hash') != expected:
        raise ConfigurationError('checkpoint {0} was trained with config {1}, current config is {2}'.format(
            path, str(data.get('config_hash'))[:12], expected[:12]))
    model = build_model(target, variant, encoder_config, fusion_config, data['mean'], data['std'],
                        DTYPES.get(data.get('dtype'), torch.float32))
    model.encoder.load_state_dict(data['encoder'])
    model.head.load_state_dict(data['head'])
    return model


def checkpoint_path(directory, target, variant, fold):
    return os.path.join(directory, '{0}-{1}-fold{2}.pt'.format(TargetProperty.parse(target).value, variant, fold))


#### folds ####

def fold_splits(ids, config):
    '''(train, val, test) id lists for every fold.'''
    ids = list(ids)
    if config.split == 'holdout':
        return [holdout_split(ids, config.holdout, config.seed + fold) for fold in range(config.folds)]
    split = make_folds(ids, config.folds, config.seed)
    return [split_fold(split, fold, config.val_fraction, config.seed) for fold in range(config.folds)]


def run_folds(samples, target, variant, encoder_config, fusion_config, config, checkpoint_dir=None, folds=None):
    '''
    Train and test every fold; fold f trains with seed + f.

    Returns: list of FoldResult
    '''
    by_id = {s.molecule_id: s for s in samples}
    results = []
    for fold, (train_ids, val_ids, test_ids) in enumerate(fold_splits(list(by_id), config)):
        if folds is not None and fold not in folds:
            continue
        fold_config = replace(config, seed=config.seed + fold)
        result = train([by_id[i] for i in train_ids], [by_id[i] for i in val_ids], target, variant,
                       encoder_config, fusion_config, fold_config)
        mae = evaluate(result.model, [by_id[i] for i in test_ids])
        path = None
        if checkpoint_dir:
            path = checkpoint_path(checkpoint_dir, target, variant, fold)
            save_checkpoint(path, result)
        logger.info('%s/%s fold %d: test MAE %.5f (best epoch %d)',
                    TargetProperty.parse(target).value, variant, fold, mae, result.best_epoch)
        results.append(FoldResult(fold, mae, result.best_epoch, result.losses, result.val_maes,
                                   {'train': len(train_ids), 'val': len(val_ids), 'test': len(test_ids)}, path))
    return results
