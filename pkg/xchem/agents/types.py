"""Records exchanged in a Selector/Validator dialogue."""
from dataclasses import dataclass, field
from typing import Optional, Tuple

from xchem.physics_rules import Violation
from xchem.properties import TargetProperty


@dataclass(frozen=True)
class SelectionProposal:
    subset: Tuple[str, ...]
    weights: Tuple[float, ...]
    rationale: str = ''

    def to_dict(self):
        return {'features': list(self.subset), 'weights': list(self.weights), 'reasoning': self.rationale}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['features']), tuple(float(w) for w in data['weights']), data.get('reasoning', ''))


@dataclass(frozen=True)
class Verdict:
    accept: bool
    critique: str
    violations: Tuple[Violation, ...] = ()
    # rules | validator | selector
    source: str = 'validator'

    def __post_init__(self):
        if not self.accept and not self.critique.strip():
            raise ValueError('a rejecting verdict needs a critique')

    def to_dict(self):
        return {
            'validated': self.accept,
            'critique': self.critique,
            'violations': [v.to_dict() for v in self.violations],
            'source': self.source,
        }

    @classmethod
    def from_dict(cls, data):
        violations = tuple(Violation(v['code'], v['message'], v['fatal']) for v in data.get('violations', []))
        return cls(bool(data['validated']), data.get('critique', ''), violations, data.get('source', 'validator'))


@dataclass(frozen=True)
class DialogueRound:
    index: int
    proposal: Optional[SelectionProposal]
    verdict: Verdict
    started_at: str = ''
    finished_at: str = ''


@dataclass(frozen=True)
class AcceptedSelection:
    target: TargetProperty
    subset: Tuple[str, ...]
    weights: Tuple[float, ...]
    rounds_used: int
    fallback_used: bool
    transcript: Tuple[DialogueRound, ...] = field(default=(), compare=False)
    molecule_id: Optional[str] = None

    @property
    def rationale(self):
        for dialogue_round in reversed(self.transcript):
            if dialogue_round.proposal is not None:
                return dialogue_round.proposal.rationale
        return ''

    def to_dict(self):
        return {
            'molecule_id': self.molecule_id,
            'target': self.target.value,
            'subset': list(self.subset),
            'weights': list(self.weights),
            'rounds_used': self.rounds_used,
            'fallback_used': self.fallback_used,
            'transcript': [round_to_dict(r) for r in self.transcript],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            target=TargetProperty.parse(data['target']),
            subset=tuple(data['subset']),
            weights=tuple(float(w) for w in data['weights']),
            rounds_used=int(data['rounds_used']),
            fallback_used=bool(data['fallback_used']),
            transcript=tuple(round_from_dict(r) for r in data.get('transcript', [])),
            molecule_id=data.get('molecule_id'),
        )


def round_to_dict(dialogue_round):
    return {
        'round': dialogue_round.index,
        'proposal': dialogue_round.proposal.to_dict() if dialogue_round.proposal else None,
        'verdict': dialogue_round.verdict.to_dict(),
        'started_at': dialogue_round.started_at,
        'finished_at': dialogue_round.finished_at,
    }


def round_from_dict(data):
    proposal = SelectionProposal.from_dict(data['proposal']) if data.get('proposal') else None
    return DialogueRound(int(data['round']), proposal, Verdict.from_dict(data['verdict']),
                         data.get('started_at', ''), data.get('finished_at', ''))
