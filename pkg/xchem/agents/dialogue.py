"""
Selector and Validator turns and the bounded dialogue between them.

A dialogue runs at most `max_rounds` select/validate rounds. Every rejected
critique is appended to the Selector's history. When every round is
rejected the latest usable proposal is kept, renormalized, and flagged
`fallback_used`.
"""
import logging
import math
from collections import OrderedDict
from datetime import datetime, timezone

from schema import Optional, Or, Schema, SchemaError

from xchem import telemetry
from xchem.agents.prompts import extract_json, repair_messages, selector_messages, validator_messages
from xchem.agents.types import AcceptedSelection, DialogueRound, SelectionProposal, Verdict, round_from_dict
from xchem.errors import DialogueError, ProposalError
from xchem.physics_rules import (MAX_DESCRIPTORS, MIN_DESCRIPTORS, advisories, critique_from, default_registry,
                                 evaluate_rules, fatal)
from xchem.properties import DESCRIPTOR_BANK, DescriptorKind, TargetProperty

logger = logging.getLogger(__name__)

DEFAULT_MAX_ROUNDS = 3
PARSE_ATTEMPTS = 2
# weight sums inside this band are renormalized rather than rejected
RENORMALIZE_BAND = (0.9 - 1e-9, 1.1 + 1e-9)
UNPARSEABLE_VERDICT = 'validator output unparseable'

PROPOSAL_SCHEMA = Schema({
    'features': [str],
    'weights': [Or(int, float)],
    Optional('reasoning'): Or(str, None),
}, ignore_extra_keys=True)

VERDICT_SCHEMA = Schema({
    'validated': bool,
    Optional('critique'): Or(str, None),
}, ignore_extra_keys=True)


def utc_now():
    return datetime.now(timezone.utc).isoformat()


def _canonical_name(name):
    try:
        return DescriptorKind.parse(name).value
    except ValueError:
        # left as written; the rule layer reports it
        return name


def parse_proposal(reply):
    '''
    Turn a Selector reply into a SelectionProposal.

    Raises: ProposalError when there is no JSON object, it has the wrong
        shape, the subset size is outside 3..5 or the weights cannot be
        brought onto the simplex by renormalizing.
    '''
    data = extract_json(reply)
    if data is None:
        raise ProposalError('no JSON object found in the reply', reply)
    try:
        data = PROPOSAL_SCHEMA.validate(data)
    except SchemaError as error:
        raise ProposalError('reply does not match {{features, weights, reasoning}}: {0}'.format(error), reply)
    names = tuple(_canonical_name(n) for n in data['features'])
    weights = [float(w) for w in data['weights']]
    if not MIN_DESCRIPTORS <= len(names) <= MAX_DESCRIPTORS:
        raise ProposalError('selected {0} descriptors; between {1} and {2} are required'.format(
            len(names), MIN_DESCRIPTORS, MAX_DESCRIPTORS), reply)
    if len(weights) != len(names):
        raise ProposalError('{0} weights given for {1} descriptors'.format(len(weights), len(names)), reply)
    if not all(math.isfinite(w) and w >= 0 for w in weights):
        raise ProposalError('weights must be finite and non-negative', reply)
    total = sum(weights)
    low, high = RENORMALIZE_BAND
    if not low <= total <= high:
        raise ProposalError('weights sum to {0:.4f}; they must sum to 1'.format(total), reply)
    return SelectionProposal(names, tuple(w / total for w in weights), data.get('reasoning') or '')


def parse_verdict(reply):
    '''(accept, critique) from a Validator reply, or None when unusable.'''
    data = extract_json(reply)
    if data is None:
        return None
    try:
        data = VERDICT_SCHEMA.validate(data)
    except SchemaError:
        return None
    critique = (data.get('critique') or '').strip()
    if not data['validated'] and not critique:
        return None
    return data['validated'], critique


def select(target, bank, history, backend, registry=None, molecule=None, max_rounds=DEFAULT_MAX_ROUNDS):
    '''
    Ask the Selector for a weighted descriptor subset.

    Params:
        history: critiques of the earlier rounds, oldest first
        molecule: optional {descriptor: value} for molecule-conditioned selection

    Raises: ProposalError after two unusable replies
    '''
    if len(history) >= max_rounds:
        raise DialogueError('{0} critiques already recorded; at most {1} rounds are allowed'.format(
            len(history), max_rounds))
    registry = registry or default_registry()
    messages = selector_messages(target, bank, history, registry, molecule)
    error = None
    for attempt in range(1, PARSE_ATTEMPTS + 1):
        reply = backend.complete(messages)
        try:
            return parse_proposal(reply)
        except ProposalError as e:
            error = e
            logger.debug('selector reply attempt %d unusable: %s', attempt, e)
            messages = repair_messages(messages, reply, str(e))
    raise error


def validate(proposal, target, backend, registry=None):
    '''
    Rule layer first; the chat backend is consulted only when no fatal rule
    fires. Advisories are handed to the backend as context.
    '''
    registry = registry or default_registry()
    violations = evaluate_rules(proposal.subset, proposal.weights, target, registry)
    hard = fatal(violations)
    if hard:
        return Verdict(False, critique_from(hard), tuple(violations), 'rules')

    messages = validator_messages(proposal, target, registry, advisories(violations))
    for attempt in range(1, PARSE_ATTEMPTS + 1):
        reply = backend.complete(messages)
        parsed = parse_verdict(reply)
        if parsed is not None:
            accept, critique = parsed
            return Verdict(accept, critique or 'accepted', tuple(violations), 'validator')
        logger.debug('validator reply attempt %d unusable', attempt)
        messages = repair_messages(messages, reply, 'expected {"validated": bool, "critique": string}')
    return Verdict(False, UNPARSEABLE_VERDICT, tuple(violations), 'validator')


def run_dialogue(target, backends, registry=None, max_rounds=DEFAULT_MAX_ROUNDS, bank=DESCRIPTOR_BANK,
                 molecule=None, molecule_id=None, clock=utc_now):
    '''
    Alternate select and validate until an accept or `max_rounds` rejects.

    Params:
        backends: (selector, validator) chat backends
        molecule: descriptor values shown to the Selector, or None to select
            on the target and bank alone
        clock: timestamp source for the transcript

    Returns: AcceptedSelection

    Raises: DialogueError when every round is rejected and no round produced
        a usable proposal. BackendUnavailableError is not caught.
    '''
    if max_rounds < 1:
        raise ValueError('max_rounds must be at least 1')
    target = TargetProperty.parse(target)
    registry = registry or default_registry()
    selector, validator = backends
    history = []
    rounds = []
    for index in range(1, max_rounds + 1):
        started = clock()
        try:
            proposal = select(target, bank, history, selector, registry, molecule, max_rounds)
            verdict = validate(proposal, target, validator, registry)
        except ProposalError as error:
            proposal = None
            verdict = Verdict(False, 'selector output unusable: {0}'.format(error), (), 'selector')
        rounds.append(DialogueRound(index, proposal, verdict, started, clock()))

        telemetry.dialogue_rounds.labels(target=target.value).inc()
        telemetry.verdicts.labels(target=target.value, outcome='accept' if verdict.accept else 'reject',
                                  source=verdict.source).inc()
        if verdict.accept:
            break
        history.append(verdict.critique)
    return _conclude(target, rounds, molecule_id)


def _usable(proposal):
    if proposal is None:
        return False
    names = proposal.subset
    weights = proposal.weights
    return (len(set(names)) == len(names)
            and all(n in DESCRIPTOR_BANK for n in names)
            and MIN_DESCRIPTORS <= len(names) <= MAX_DESCRIPTORS
            and len(weights) == len(names)
            and all(math.isfinite(w) and w >= 0 for w in weights)
            and sum(weights) > 0)


def _conclude(target, rounds, molecule_id=None):
    if not rounds:
        raise DialogueError('dialogue has no rounds')
    for dialogue_round in rounds[:-1]:
        if dialogue_round.verdict.accept:
            raise DialogueError('round {0} accepted but the dialogue continued'.format(dialogue_round.index))
    final = rounds[-1]
    if final.verdict.accept:
        return AcceptedSelection(target, final.proposal.subset, final.proposal.weights, len(rounds), False,
                                 tuple(rounds), molecule_id)

    usable = [r.proposal for r in rounds if _usable(r.proposal)]
    if not usable:
        raise DialogueError('all {0} rounds rejected for {1} and no usable proposal to fall back on'.format(
            len(rounds), molecule_id or target.value))
    proposal = usable[-1]
    total = sum(proposal.weights)
    logger.warning('fallback selection for %s/%s after %d rejected rounds',
                   molecule_id or '-', target.value, len(rounds))
    telemetry.fallbacks.labels(target=target.value).inc()
    return AcceptedSelection(target, proposal.subset, tuple(w / total for w in proposal.weights), len(rounds), True,
                             tuple(rounds), molecule_id)


def replay_transcript(records, strict=True):
    '''
    Rebuild AcceptedSelections from transcript rows.

    Rows are grouped by (molecule_id, target) in order of first appearance.
    A row with round 1 starts a new attempt for its key, so the latest
    complete run wins when a transcript was appended to more than once.
    With strict=False, dialogues that cannot be rebuilt are logged and
    left out instead of raising DialogueError.
    '''
    dialogues = OrderedDict()
    for record in records:
        try:
            key = (record.get('molecule_id'), TargetProperty.parse(record['target']))
            dialogue_round = round_from_dict(record)
        except (KeyError, TypeError, ValueError) as error:
            if strict:
                raise DialogueError('malformed transcript row: {0}'.format(error))
            logger.warning('skipping malformed transcript row for %s: %s', record.get('molecule_id'), error)
            continue
        if dialogue_round.index == 1 or key not in dialogues:
            dialogues[key] = []
        dialogues[key].append(dialogue_round)

    selections = []
    for (molecule_id, target), rounds in dialogues.items():
        rounds.sort(key=lambda r: r.index)
        try:
            if [r.index for r in rounds] != list(range(1, len(rounds) + 1)):
                raise DialogueError('transcript rounds for {0}/{1} are not contiguous'.format(molecule_id, target.value))
            selections.append(_conclude(target, rounds, molecule_id))
        except DialogueError as error:
            if strict:
                raise
            logger.warning('cannot replay %s/%s: %s', molecule_id, target.value, error)
    return selections
