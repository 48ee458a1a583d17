"""JSON Lines persistence for dialogue transcripts and accepted selections."""
import json
import logging
import os
import threading

from xchem.agents.types import AcceptedSelection, round_to_dict
from xchem.properties import TargetProperty

logger = logging.getLogger(__name__)


def transcript_records(selection, rules_sha256=''):
    '''One row per round: {molecule_id, target, round, proposal, verdict, timestamps, rules_sha256}.'''
    rows = []
    for dialogue_round in selection.transcript:
        row = round_to_dict(dialogue_round)
        row['molecule_id'] = selection.molecule_id
        row['target'] = selection.target.value
        row['rules_sha256'] = rules_sha256
        rows.append(row)
    return rows


def read_jsonl(path, skipped=None):
    '''
    Decoded rows of a JSON Lines file. Malformed lines are logged and
    skipped; their numbers are appended to `skipped` when given.
    '''
    if not os.path.exists(path):
        return
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except ValueError as error:
                logger.warning('%s, line %d: skipping malformed row: %s', path, number, error)
                if skipped is not None:
                    skipped.append(number)
                continue
            if not isinstance(row, dict):
                logger.warning('%s, line %d: skipping non-object row', path, number)
                if skipped is not None:
                    skipped.append(number)
                continue
            yield row


class _JsonlAppender:
    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, rows):
        lines = ''.join(json.dumps(row, sort_keys=True, ensure_ascii=False) + '\n' for row in rows)
        with self._lock:
            directory = os.path.dirname(self.path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(lines)


class TranscriptWriter(_JsonlAppender):
    '''Serialized appends of whole dialogues; parallel dialogues never interleave rows.'''

    def __init__(self, path, rules_sha256=''):
        super().__init__(path)
        self.rules_sha256 = rules_sha256

    def write(self, selection):
        self.append(transcript_records(selection, self.rules_sha256))


class SelectionStore(_JsonlAppender):
    '''
    Accepted selections keyed by (molecule id, target). Re-running a phase
    only appends; on load the last row of each key wins, so a forced re-run
    supersedes earlier answers.
    '''

    def __init__(self, path):
        super().__init__(path)
        self._selections = {}
        for row in read_jsonl(path):
            try:
                selection = AcceptedSelection.from_dict(row)
            except (KeyError, TypeError, ValueError) as error:
                logger.warning('%s: skipping selection row for %s: %s', path, row.get('molecule_id'), error)
                continue
            self._selections[(selection.molecule_id, selection.target)] = selection

    def __contains__(self, key):
        molecule_id, target = key
        return (molecule_id, TargetProperty.parse(target)) in self._selections

    def __len__(self):
        return len(self._selections)

    def get(self, molecule_id, target):
        return self._selections.get((molecule_id, TargetProperty.parse(target)))

    def put(self, selection):
        row = selection.to_dict()
        row.pop('transcript')
        self.append([row])
        with self._lock:
            self._selections[(selection.molecule_id, selection.target)] = selection

    def for_target(self, target):
        target = TargetProperty.parse(target)
        return {m: s for (m, t), s in self._selections.items() if t == target}

    def all(self):
        return list(self._selections.values())
