"""
Prompt builders and reply parsing for both agents.

Every user message opens with a fenced JSON request block; it is the first
brace-delimited object in the message so stub backends can read it with the
same extractor used on replies.
"""
import json

from xchem.properties import TargetProperty

SELECTOR_SYSTEM_PROMPT = """You are the Selector agent of a molecular property prediction pipeline.
You choose which textual chemical descriptors should inform the prediction of
one target property, and how much each one should count.

Rules:
- choose between 3 and 5 distinct descriptors from the bank you are given;
- give one non-negative weight per descriptor; the weights must sum to 1;
- explain your choice briefly, in terms of the physics of the target;
- if earlier proposals were rejected, address every point of the critiques.

Answer with a single JSON object and nothing else, with the keys
"features" (list of descriptor names exactly as written in the bank),
"weights" (list of numbers, same order) and "reasoning" (string)."""

VALIDATOR_SYSTEM_PROMPT = """You are the Validator agent of a molecular property prediction pipeline.
You receive a weighted descriptor subset proposed for one target property and
decide whether it is physically sound. Judge it against:
(i) unit consistency between each descriptor and the target;
(ii) adherence to known scaling relations (for example Koopmans' theorem for
    frontier orbital energies);
(iii) sparsity and complementarity: no redundant descriptors, diverse evidence.

Answer with a single JSON object and nothing else, with the keys
"validated" (true or false) and "critique" (string; required when rejecting,
state concretely what must change)."""

REPAIR_PROMPT = ('Your previous reply could not be used: {reason}. '
                 'Reply again with only the JSON object described in the instructions.')


def _balanced_end(text, start):
    '''Index of the brace closing the one at `start`, or None.'''
    depth = 0
    in_string = False
    escaped = False
    for position in range(start, len(text)):
        char = text[position]
        if in_string:
            if escaped:
                escaped = False
            elif char == '\\':
                escaped = True
            elif char == '"':
                in_string = False
        elif char == '"':
            in_string = True
        elif char == '{':
            depth += 1
        elif char == '}':
            depth -= 1
            if depth == 0:
                return position
    return None


def extract_json(text):
    '''
    The first balanced brace pair of `text` that decodes to a JSON object.
    Pairs that do not decode are skipped.

    Returns: dict, or None when no pair decodes to a JSON object.
    '''
    start = text.find('{')
    while start != -1:
        end = _balanced_end(text, start)
        if end is not None:
            try:
                value = json.loads(text[start:end + 1])
            except ValueError:
                value = None
            if isinstance(value, dict):
                return value
        start = text.find('{', start + 1)
    return None


def _request_block(request):
    return '```json\n' + json.dumps(request, sort_keys=True, ensure_ascii=False) + '\n```'


def selector_messages(target, bank, critiques, registry, molecule=None):
    '''
    Chat messages for one Selector call.

    Params:
        target: TargetProperty
        bank: descriptor names on offer
        critiques: list of earlier Validator critiques, oldest first
        registry: RuleRegistry, for dimension signatures
        molecule: optional {descriptor name: value text} when the Selector
            conditions on the molecule itself
    '''
    target = TargetProperty.parse(target)
    request = {
        'task': 'select_descriptors',
        'target': target.value,
        'target_label': target.label,
        'target_unit': target.unit,
        'target_dimension': registry.describe_target(target),
        'bank': list(bank),
        'critiques': list(critiques),
    }
    if molecule:
        request['molecule'] = dict(molecule)
    lines = [
        _request_block(request),
        'Select descriptors for predicting the {0} ({1}).'.format(target.label, target.unit),
        'Descriptor bank with dimension signatures:',
    ]
    lines.extend('- ' + entry for entry in registry.describe_bank() if entry.split(' ')[0] in bank)
    if critiques:
        lines.append('Earlier proposals were rejected:')
        lines.extend('- round {0}: {1}'.format(i, c) for i, c in enumerate(critiques, start=1))
    return [
        {'role': 'system', 'content': SELECTOR_SYSTEM_PROMPT},
        {'role': 'user', 'content': '\n'.join(lines)},
    ]


def validator_messages(proposal, target, registry, advisories=()):
    target = TargetProperty.parse(target)
    request = {
        'task': 'validate_selection',
        'target': target.value,
        'target_label': target.label,
        'target_dimension': registry.describe_target(target),
        'features': list(proposal.subset),
        'weights': list(proposal.weights),
        'reasoning': proposal.rationale,
    }
    lines = [
        _request_block(request),
        'Proposed descriptors for the {0} ({1}):'.format(target.label, target.unit),
    ]
    for name, weight in zip(proposal.subset, proposal.weights):
        signature = registry.signatures[name].describe() if name in registry.signatures else 'unknown'
        lines.append('- {0} [{1}] weight {2:.3f}'.format(name, signature, weight))
    if proposal.rationale:
        lines.append('Selector rationale: ' + proposal.rationale)
    relevant = [rule for rule in registry.scaling_rules if target in rule.targets]
    if relevant:
        lines.append('Scaling relations to respect:')
        lines.extend('- {0}: {1}'.format(rule.name, rule.note) for rule in relevant)
    if advisories:
        lines.append('Automatic checks raised these advisories:')
        lines.extend('- ' + v.message for v in advisories)
    return [
        {'role': 'system', 'content': VALIDATOR_SYSTEM_PROMPT},
        {'role': 'user', 'content': '\n'.join(lines)},
    ]


def repair_messages(messages, reply, reason):
    return list(messages) + [
        {'role': 'assistant', 'content': reply},
        {'role': 'user', 'content': REPAIR_PROMPT.format(reason=reason)},
    ]


def find_request(messages, task):
    '''Latest request block of the given task among the user messages.'''
    for message in reversed(messages):
        if message.get('role') != 'user':
            continue
        request = extract_json(message.get('content', ''))
        if request and request.get('task') == task:
            return request
    return None
