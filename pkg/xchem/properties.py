"""Target properties and the descriptor bank."""
import re
from enum import Enum


class TargetProperty(str, Enum):
    MU = 'mu'
    ALPHA = 'alpha'
    HOMO = 'homo'
    LUMO = 'lumo'
    GAP = 'gap'
    R2 = 'r2'
    ZPVE = 'zpve'
    U0 = 'u0'
    U298 = 'u298'

    @property
    def unit(self):
        return TARGET_UNITS[self]

    @property
    def label(self):
        return TARGET_LABELS[self]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        key = TARGET_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError('unknown target property {0!r}'.format(value))


TARGET_UNITS = {
    TargetProperty.MU: 'D',
    TargetProperty.ALPHA: 'Å³',
    TargetProperty.HOMO: 'eV',
    TargetProperty.LUMO: 'eV',
    TargetProperty.GAP: 'eV',
    TargetProperty.R2: 'bohr²',
    TargetProperty.ZPVE: 'eV',
    TargetProperty.U0: 'eV',
    TargetProperty.U298: 'eV',
}

TARGET_LABELS = {
    TargetProperty.MU: 'dipole moment',
    TargetProperty.ALPHA: 'isotropic polarizability',
    TargetProperty.HOMO: 'HOMO energy',
    TargetProperty.LUMO: 'LUMO energy',
    TargetProperty.GAP: 'HOMO-LUMO gap',
    TargetProperty.R2: 'electronic spatial extent',
    TargetProperty.ZPVE: 'zero-point vibrational energy',
    TargetProperty.U0: 'internal energy at 0 K',
    TargetProperty.U298: 'internal energy at 298.15 K',
}

TARGET_ALIASES = {
    'epsilon_h': 'homo', 'eps_h': 'homo',
    'epsilon_l': 'lumo', 'eps_l': 'lumo',
    'delta_epsilon': 'gap', 'delta_eps': 'gap',
    'u': 'u298', 'u_298k': 'u298', 'u_0k': 'u0',
    'e_zpve': 'zpve',
}

# fixed report ordering
TARGET_ORDER = list(TargetProperty)


class DescriptorKind(str, Enum):
    IUPAC = 'IUPAC'
    FORMULA = 'Formula'
    MOLECULAR_WEIGHT = 'MolecularWeight'
    XLOGP = 'XLogP'
    HBOND_DONORS = 'HBondDonors'
    HBOND_ACCEPTORS = 'HBondAcceptors'
    ROTATABLE_BONDS = 'RotatableBonds'
    PSA = 'PSA'
    SYNONYMS = 'Synonyms'

    @property
    def display_name(self):
        return DESCRIPTOR_DISPLAY_NAMES[self]

    @classmethod
    def parse(cls, value):
        '''Accept canonical names, display names and PubChem property names.'''
        if isinstance(value, cls):
            return value
        key = _squash(value)
        if key in _DESCRIPTOR_LOOKUP:
            return _DESCRIPTOR_LOOKUP[key]
        raise ValueError('unknown descriptor {0!r}'.format(value))


DESCRIPTOR_BANK = [kind.value for kind in DescriptorKind]

DESCRIPTOR_DISPLAY_NAMES = {
    DescriptorKind.IUPAC: 'IUPAC Name',
    DescriptorKind.FORMULA: 'Molecular Formula',
    DescriptorKind.MOLECULAR_WEIGHT: 'Molecular Weight',
    DescriptorKind.XLOGP: 'XLogP',
    DescriptorKind.HBOND_DONORS: 'H-Bond Donors',
    DescriptorKind.HBOND_ACCEPTORS: 'H-Bond Acceptors',
    DescriptorKind.ROTATABLE_BONDS: 'Rotatable Bonds',
    DescriptorKind.PSA: 'Topological Polar Surface Area',
    DescriptorKind.SYNONYMS: 'Synonyms',
}

# units appended to the value when the metadata gives a bare number
DESCRIPTOR_UNITS = {
    DescriptorKind.MOLECULAR_WEIGHT: 'g/mol',
    DescriptorKind.PSA: 'Å²',
}

NUMERIC_DESCRIPTORS = {
    DescriptorKind.MOLECULAR_WEIGHT,
    DescriptorKind.XLOGP,
    DescriptorKind.HBOND_DONORS,
    DescriptorKind.HBOND_ACCEPTORS,
    DescriptorKind.ROTATABLE_BONDS,
    DescriptorKind.PSA,
}

PUBCHEM_ALIASES = {
    'IUPACName': DescriptorKind.IUPAC,
    'MolecularFormula': DescriptorKind.FORMULA,
    'TPSA': DescriptorKind.PSA,
    'HBondDonorCount': DescriptorKind.HBOND_DONORS,
    'HBondAcceptorCount': DescriptorKind.HBOND_ACCEPTORS,
    'RotatableBondCount': DescriptorKind.ROTATABLE_BONDS,
    'PolarSurfaceArea': DescriptorKind.PSA,
}


def _squash(value):
    return re.sub(r'[^a-z0-9]', '', str(value).lower())


_DESCRIPTOR_LOOKUP = {}
for _kind in DescriptorKind:
    _DESCRIPTOR_LOOKUP[_squash(_kind.value)] = _kind
    _DESCRIPTOR_LOOKUP[_squash(DESCRIPTOR_DISPLAY_NAMES[_kind])] = _kind
for _alias, _kind in PUBCHEM_ALIASES.items():
    _DESCRIPTOR_LOOKUP[_squash(_alias)] = _kind
_DESCRIPTOR_LOOKUP['polarsurfacearea'] = DescriptorKind.PSA
_DESCRIPTOR_LOOKUP['hbd'] = DescriptorKind.HBOND_DONORS
_DESCRIPTOR_LOOKUP['hba'] = DescriptorKind.HBOND_ACCEPTORS
