"""Small QM9-shaped fixtures shared by the test modules."""
import json
import os

import numpy as np

from xchem.dataset import DescriptorRecord, Molecule, qm9_id
from xchem.properties import DescriptorKind, TargetProperty

METHANE_XYZ = '\n'.join([
    '5',
    'gdb 1\t157.7118\t157.70997\t157.70699\t0.\t13.21\t-0.3877\t0.1171\t0.5048\t35.3641\t0.044749'
    '\t-40.47893\t-40.476062\t-40.475117\t-40.498597\t6.469\t',
    'C\t-0.0126981359\t 1.0858041578\t 0.0080009958\t-0.535689',
    'H\t 0.002150416\t-0.0060313176\t 0.0019761204\t 0.133921',
    'H\t 1.0117308433\t 1.4637511618\t 0.0002765748\t 0.133922',
    'H\t-0.540815069\t 1.4475266138\t-0.8766437152\t 0.133923',
    'H\t-0.5238136345\t 1.4379326443\t 0.9063972942\t 0.133923',
    '1341.307\t1341.3284\t1341.365\t1562.6731\t1562.7453\t3038.3205\t3151.6034\t3151.6788\t3151.7078',
    'C\tC\t',
    'InChI=1S/CH4/h1H4\tInChI=1S/CH4/h1H4',
]) + '\n'


def metadata_row(index, **overrides):
    '''A complete metadata object for QM9 index `index`; None values drop the key.'''
    row = {
        'id': qm9_id(index),
        'IUPAC': 'molecule-{0}'.format(index),
        'Formula': 'C{0}H4'.format(index),
        'MolecularWeight': round(16.04 + index, 2),
        'XLogP': 0.6,
        'HBondDonors': 0,
        'HBondAcceptors': index % 3,
        'RotatableBonds': 0,
        'PSA': 0.0,
        'Synonyms': ['synonym-{0}'.format(index)],
    }
    row.update(overrides)
    return {k: v for k, v in row.items() if v is not None}


def full_descriptors(index=1):
    return [DescriptorRecord(kind, text) for kind, text in [
        (DescriptorKind.IUPAC, 'molecule-{0}'.format(index)),
        (DescriptorKind.FORMULA, 'C{0}H4'.format(index)),
        (DescriptorKind.MOLECULAR_WEIGHT, '{0:.2f}'.format(16.04 + index)),
        (DescriptorKind.XLOGP, '0.6'),
        (DescriptorKind.HBOND_DONORS, '0'),
        (DescriptorKind.HBOND_ACCEPTORS, str(index % 3)),
        (DescriptorKind.ROTATABLE_BONDS, '0'),
        (DescriptorKind.PSA, '0.0'),
        (DescriptorKind.SYNONYMS, 'synonym-{0}'.format(index)),
    ]]


def random_molecule(index, rng, num_atoms=None):
    '''A small random molecule of C/N/O/H atoms at least 0.9 Å apart.'''
    num_atoms = num_atoms or int(rng.integers(3, 8))
    positions = []
    while len(positions) < num_atoms:
        candidate = rng.uniform(-2.0, 2.0, size=3)
        if all(np.linalg.norm(candidate - p) > 0.9 for p in positions):
            positions.append(candidate)
    atomic_numbers = tuple(int(z) for z in rng.choice([1, 6, 7, 8], size=num_atoms))
    spread = float(np.mean([np.linalg.norm(p) for p in positions]))
    targets = {t: float(sum(atomic_numbers) * 0.01 + spread + i) for i, t in enumerate(TargetProperty)}
    return Molecule(qm9_id(index), atomic_numbers, tuple(tuple(float(c) for c in p) for p in positions), targets)


def random_records(count, seed=0):
    rng = np.random.default_rng(seed)
    return [(random_molecule(i, rng), full_descriptors(i)) for i in range(1, count + 1)]


def write_xyz_dir(directory, molecules):
    from xchem.dataset import serialize_xyz
    os.makedirs(directory, exist_ok=True)
    for molecule in molecules:
        with open(os.path.join(directory, molecule.id + '.xyz'), 'w', encoding='utf-8') as f:
            f.write(serialize_xyz(molecule))


def write_metadata(path, rows):
    with open(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(json.dumps(row) + '\n')
