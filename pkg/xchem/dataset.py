#!/usr/bin/env python3
# -*- coding: utf8 -*-
"""QM9 geometry parsing, metadata join, completeness filtering and folds."""
import glob
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from schema import And, Or, Schema, SchemaError

from xchem.errors import ParseError, XChemError
from xchem.properties import (DESCRIPTOR_BANK, NUMERIC_DESCRIPTORS, DescriptorKind,
                              TargetProperty)

logger = logging.getLogger(__name__)

HARTREE_TO_EV = 27.211386245988

# QM9 comment line: "gdb <index>" followed by 15 scalar properties
QM9_PROPERTY_COLUMNS = ['A', 'B', 'C', 'mu', 'alpha', 'homo', 'lumo', 'gap',
                        'r2', 'zpve', 'U0', 'U', 'H', 'G', 'Cv']
QM9_TARGET_COLUMNS = {
    TargetProperty.MU: 'mu',
    TargetProperty.ALPHA: 'alpha',
    TargetProperty.HOMO: 'homo',
    TargetProperty.LUMO: 'lumo',
    TargetProperty.GAP: 'gap',
    TargetProperty.R2: 'r2',
    TargetProperty.ZPVE: 'zpve',
    TargetProperty.U0: 'U0',
    TargetProperty.U298: 'U',
}
HARTREE_TARGETS = {TargetProperty.HOMO, TargetProperty.LUMO, TargetProperty.GAP,
                   TargetProperty.ZPVE, TargetProperty.U0, TargetProperty.U298}

ELEMENTS = ['H', 'He', 'Li', 'Be', 'B', 'C', 'N', 'O', 'F', 'Ne', 'Na', 'Mg', 'Al',
            'Si', 'P', 'S', 'Cl', 'Ar', 'K', 'Ca', 'Sc', 'Ti', 'V', 'Cr', 'Mn', 'Fe',
            'Co', 'Ni', 'Cu', 'Zn', 'Ga', 'Ge', 'As', 'Se', 'Br', 'Kr', 'Rb', 'Sr',
            'Y', 'Zr', 'Nb', 'Mo', 'Tc', 'Ru', 'Rh', 'Pd', 'Ag', 'Cd', 'In', 'Sn',
            'Sb', 'Te', 'I', 'Xe']
ATOMIC_NUMBERS = {symbol: z for z, symbol in enumerate(ELEMENTS, start=1)}
ELEMENT_SYMBOLS = {z: symbol for symbol, z in ATOMIC_NUMBERS.items()}

# static dimension table; None marks textual descriptors
DIMENSION_SIGNATURES = {
    DescriptorKind.IUPAC: None,
    DescriptorKind.FORMULA: None,
    DescriptorKind.SYNONYMS: None,
    DescriptorKind.MOLECULAR_WEIGHT: {'mass': 1, 'amount': -1},
    DescriptorKind.PSA: {'length': 2},
    DescriptorKind.XLOGP: {},
    DescriptorKind.HBOND_DONORS: {},
    DescriptorKind.HBOND_ACCEPTORS: {},
    DescriptorKind.ROTATABLE_BONDS: {},
}


@dataclass(frozen=True)
class Molecule:
    id: str
    atomic_numbers: Tuple[int, ...]
    positions: Tuple[Tuple[float, float, float], ...]
    targets: Dict[TargetProperty, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.positions) != len(self.atomic_numbers):
            raise ValueError('molecule {0}: {1} positions for {2} atoms'.format(
                self.id, len(self.positions), len(self.atomic_numbers)))
        if any(z < 1 for z in self.atomic_numbers):
            raise ValueError('molecule {0}: atomic numbers must be >= 1'.format(self.id))
        for target, value in self.targets.items():
            if not math.isfinite(value):
                raise ValueError('molecule {0}: target {1} is not finite'.format(self.id, target.value))

    @property
    def num_atoms(self):
        return len(self.atomic_numbers)

    def position_array(self):
        return np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)

    def with_positions(self, positions):
        positions = tuple(tuple(float(c) for c in row) for row in np.asarray(positions))
        return Molecule(self.id, self.atomic_numbers, positions, dict(self.targets))


@dataclass(frozen=True)
class DescriptorRecord:
    name: DescriptorKind
    text: str

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError('descriptor {0} has empty text'.format(self.name.value))

    @property
    def dimension_signature(self):
        '''Base-dimension exponents, or the string "textual".'''
        signature = DIMENSION_SIGNATURES[self.name]
        return 'textual' if signature is None else dict(signature)


@dataclass(frozen=True)
class FoldSplit:
    seed: int
    k: int
    assignments: Dict[str, int]

    def fold_ids(self, fold):
        return [mol_id for mol_id, f in self.assignments.items() if f == fold]

    def sizes(self):
        counts = [0] * self.k
        for f in self.assignments.values():
            counts[f] += 1
        return counts


@dataclass
class IngestResult:
    retained: List[Tuple[Molecule, List[DescriptorRecord]]]
    dropped: List[str]


def parse_float(token, line=None, source=None):
    '''
    Parse a QM9 float token. Mathematica-style exponents ("1.234*^-5") are
    rewritten to "e" notation first.
    '''
    try:
        value = float(token.replace('*^', 'e'))
    except ValueError:
        raise ParseError('cannot parse number {0!r}'.format(token), line=line, source=source)
    return value


def qm9_index(mol_id):
    '''The trailing integer of an id ("qm9_000012", "gdb 12", 12 -> 12).'''
    match = re.search(r'(\d+)\s*$', str(mol_id))
    return int(match.group(1)) if match else None


def qm9_id(index):
    return 'qm9_{0:06d}'.format(int(index))


def parse_xyz(text, source=None):
    '''
    Parse one QM9-style extended XYZ record.

    Params:
        text: (str) atom-count line, comment line, one line per atom
            ("El x y z [charge]"), optional trailing QM9 lines (frequencies,
            SMILES, InChI) which are ignored.
        source: label used in error messages (usually the file path).

    Returns: Molecule; Hartree-valued targets are converted to eV.
    '''
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError('missing atom count', line=1, source=source)
    try:
        natoms = int(lines[0].split()[0])
    except ValueError:
        raise ParseError('malformed atom count {0!r}'.format(lines[0].strip()), line=1, source=source)
    if natoms < 1:
        raise ParseError('atom count must be positive, got {0}'.format(natoms), line=1, source=source)
    if len(lines) < natoms + 2:
        raise ParseError('expected {0} atom lines, found {1}'.format(natoms, max(len(lines) - 2, 0)),
                         line=len(lines), source=source)

    comment = lines[1].strip()
    mol_id, targets = _parse_comment(comment, source)
    if not mol_id:
        mol_id = os.path.splitext(os.path.basename(str(source)))[0] if source else 'molecule'

    atomic_numbers = []
    positions = []
    for offset in range(natoms):
        lineno = offset + 3
        fields = lines[offset + 2].split()
        if len(fields) < 4:
            raise ParseError('atom line needs an element and three coordinates', line=lineno, source=source)
        symbol = fields[0]
        if symbol not in ATOMIC_NUMBERS:
            raise ParseError('unknown element symbol {0!r}'.format(symbol), line=lineno, source=source)
        coords = tuple(parse_float(tok, lineno, source) for tok in fields[1:4])
        if not all(math.isfinite(c) for c in coords):
            raise ParseError('non-finite coordinate', line=lineno, source=source)
        atomic_numbers.append(ATOMIC_NUMBERS[symbol])
        positions.append(coords)

    return Molecule(mol_id, tuple(atomic_numbers), tuple(positions), targets)


def _parse_comment(comment, source):
    fields = comment.split()
    if len(fields) < 2 or fields[0] != 'gdb':
        return comment, {}
    index = qm9_index(fields[1])
    if index is None:
        raise ParseError('malformed gdb index {0!r}'.format(fields[1]), line=2, source=source)
    values = fields[2:]
    if len(values) < len(QM9_PROPERTY_COLUMNS):
        raise ParseError('expected {0} properties, found {1}'.format(len(QM9_PROPERTY_COLUMNS), len(values)),
                         line=2, source=source)
    properties = dict(zip(QM9_PROPERTY_COLUMNS, values))
    targets = {}
    for target, column in QM9_TARGET_COLUMNS.items():
        value = parse_float(properties[column], 2, source)
        if not math.isfinite(value):
            raise ParseError('property {0} is not finite'.format(column), line=2, source=source)
        if target in HARTREE_TARGETS:
            value *= HARTREE_TO_EV
        targets[target] = value
    return qm9_id(index), targets


def serialize_xyz(molecule):
    '''Inverse of parse_xyz; non-target QM9 columns are written as nan.'''
    if molecule.targets:
        properties = {column: 'nan' for column in QM9_PROPERTY_COLUMNS}
        for target, value in molecule.targets.items():
            if target in HARTREE_TARGETS:
                value = value / HARTREE_TO_EV
            properties[QM9_TARGET_COLUMNS[target]] = repr(float(value))
        index = qm9_index(molecule.id)
        if index is None:
            raise ValueError('molecule {0} has targets but no QM9 index'.format(molecule.id))
        comment = '\t'.join(['gdb {0}'.format(index)] + [properties[c] for c in QM9_PROPERTY_COLUMNS])
    else:
        comment = molecule.id
    lines = [str(molecule.num_atoms), comment]
    for z, (x, y, zc) in zip(molecule.atomic_numbers, molecule.positions):
        lines.append('{0}\t{1!r}\t{2!r}\t{3!r}'.format(ELEMENT_SYMBOLS[z], float(x), float(y), float(zc)))
    return '\n'.join(lines) + '\n'


#### metadata ####

METADATA_SCHEMA = Schema({
    'id': Or(And(str, len), int),
}, ignore_extra_keys=True)


def _descriptor_value(kind, raw):
    '''Render a raw metadata value, or None when it counts as missing.'''
    if raw is None:
        return None
    if kind == DescriptorKind.SYNONYMS and isinstance(raw, (list, tuple)):
        raw = '; '.join(str(s).strip() for s in raw if str(s).strip())
    if isinstance(raw, bool):
        return None
    text = str(raw).strip()
    if not text:
        return None
    if kind in NUMERIC_DESCRIPTORS:
        # present but unparseable counts as missing
        try:
            number = float(text)
        except ValueError:
            return None
        if not math.isfinite(number):
            return None
    return text


def parse_metadata_record(record):
    '''
    Validate one metadata object and return (qm9 index, descriptor records).
    Unknown keys (formal charge, spectra, ...) are ignored.
    '''
    try:
        record = METADATA_SCHEMA.validate(record)
    except SchemaError as error:
        raise ParseError('invalid metadata record: {0}'.format(error))
    index = qm9_index(record['id'])
    if index is None:
        raise ParseError('metadata id {0!r} carries no QM9 index'.format(record['id']))
    found = {}
    for key, raw in record.items():
        if key == 'id':
            continue
        try:
            kind = DescriptorKind.parse(key)
        except ValueError:
            continue
        text = _descriptor_value(kind, raw)
        if text is not None and kind not in found:
            found[kind] = DescriptorRecord(kind, text)
    return index, [found[kind] for kind in DescriptorKind if kind in found]


def load_metadata(path):
    '''Read the JSON Lines metadata file into {qm9 index: [DescriptorRecord]}.'''
    metadata = {}
    with open(path, encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                index, records = parse_metadata_record(json.loads(line))
            except (ValueError, ParseError) as error:
                raise ParseError(str(error), line=lineno, source=path)
            metadata[index] = records
    return metadata


def filter_complete(records):
    '''Keep molecules whose descriptor list covers all nine kinds with text.'''
    required = set(DESCRIPTOR_BANK)
    kept = []
    for molecule, descriptors in records:
        present = {d.name.value for d in descriptors if d.text and d.text.strip()}
        if required <= present:
            kept.append((molecule, descriptors))
    return kept


def ingest(xyz_dir, metadata_path):
    '''
    Parse every *.xyz file under `xyz_dir`, join metadata by QM9 index and
    drop incomplete molecules. Files are visited in sorted order.
    '''
    paths = sorted(glob.glob(os.path.join(xyz_dir, '*.xyz')))
    if not paths:
        raise XChemError('no .xyz files found in {0}'.format(xyz_dir))
    metadata = load_metadata(metadata_path)

    joined = []
    for path in paths:
        with open(path, encoding='utf-8') as f:
            molecule = parse_xyz(f.read(), source=path)
        joined.append((molecule, metadata.get(qm9_index(molecule.id), [])))

    retained = filter_complete(joined)
    kept_ids = {m.id for m, _ in retained}
    dropped = [m.id for m, _ in joined if m.id not in kept_ids]
    for mol_id in dropped:
        logger.debug('dropping %s: incomplete descriptors', mol_id)
    return IngestResult(retained, dropped)


#### canonical dataset file ####

def dataset_row(molecule, descriptors):
    return {
        'id': molecule.id,
        'atomic_numbers': list(molecule.atomic_numbers),
        'positions': [list(p) for p in molecule.positions],
        'targets': {t.value: v for t, v in sorted(molecule.targets.items(), key=lambda kv: kv[0].value)},
        'descriptors': {d.name.value: d.text for d in descriptors},
    }


def write_dataset(path, records):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for molecule, descriptors in records:
            f.write(json.dumps(dataset_row(molecule, descriptors), sort_keys=True, ensure_ascii=False))
            f.write('\n')


def read_dataset(path):
    records = []
    with open(path, encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                molecule = Molecule(
                    row['id'],
                    tuple(int(z) for z in row['atomic_numbers']),
                    tuple(tuple(float(c) for c in p) for p in row['positions']),
                    {TargetProperty.parse(k): float(v) for k, v in row['targets'].items()},
                )
                descriptors = [DescriptorRecord(DescriptorKind.parse(k), v)
                               for k, v in row['descriptors'].items()]
            except (KeyError, ValueError, TypeError) as error:
                raise ParseError('bad dataset row: {0}'.format(error), line=lineno, source=path)
            records.append((molecule, descriptors))
    return records


#### folds ####

def make_folds(ids, k, seed):
    '''
    Deterministic balanced k-fold assignment.

    Params:
        ids: (list of str) distinct molecule ids.
        k: (int) number of folds, 2 <= k <= len(ids).
        seed: (int) permutation seed.

    Returns: FoldSplit whose fold sizes differ by at most one.
    '''
    ids = list(ids)
    if k < 2:
        raise ValueError('k must be at least 2, got {0}'.format(k))
    if len(set(ids)) != len(ids):
        raise ValueError('molecule ids must be distinct')
    if k > len(ids):
        raise ValueError('cannot make {0} folds from {1} molecules'.format(k, len(ids)))
    order = np.random.default_rng(seed).permutation(len(ids))
    assignments = {}
    for rank, position in enumerate(order):
        assignments[ids[position]] = rank % k
    # keep input order in the mapping
    return FoldSplit(seed, k, {mol_id: assignments[mol_id] for mol_id in ids})


def split_fold(split, fold, val_fraction, seed):
    '''
    Train/validation/test ids for one fold of a FoldSplit: the fold itself
    is the test set and a `val_fraction` slice of the remaining ids is
    carved off for model selection.
    '''
    test = split.fold_ids(fold)
    rest = [mol_id for mol_id, f in split.assignments.items() if f != fold]
    order = np.random.default_rng([seed, fold]).permutation(len(rest))
    n_val = max(1, int(round(val_fraction * len(rest))))
    val = [rest[i] for i in sorted(order[:n_val])]
    train = [rest[i] for i in sorted(order[n_val:])]
    return train, val, test


def holdout_split(ids, fractions, seed):
    '''
    Independent train/val/test split with the given fractions. Validation
    and test get at least one id each; train takes the rest.
    '''
    ids = list(ids)
    if len(ids) < 3:
        raise ValueError('a holdout split needs at least 3 ids, got {0}'.format(len(ids)))
    order = np.random.default_rng(seed).permutation(len(ids))
    n_val = max(1, int(round(fractions[1] * len(ids))))
    n_test = max(1, int(round(fractions[2] * len(ids))))
    n_train = len(ids) - n_val - n_test
    if n_train < 1:
        raise ValueError('fractions {0} leave no training ids out of {1}'.format(tuple(fractions), len(ids)))
    train = [ids[i] for i in sorted(order[:n_train])]
    val = [ids[i] for i in sorted(order[n_train:n_train + n_val])]
    test = [ids[i] for i in sorted(order[n_train + n_val:])]
    return train, val, test
