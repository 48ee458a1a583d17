import json
import os
import tempfile
import unittest
from unittest import mock

from xchem.agents.backends import (SELECTION_PRIOR, AcceptingValidatorBackend, HttpChatBackend,
                                   RejectingValidatorBackend, ScriptedBackend, TableSelectorBackend, table_selection)
from xchem.agents.dialogue import (UNPARSEABLE_VERDICT, parse_proposal, parse_verdict, replay_transcript,
                                   run_dialogue, select, validate)
from xchem.agents.prompts import extract_json, find_request, selector_messages
from xchem.agents.store import SelectionStore, TranscriptWriter, read_jsonl, transcript_records
from xchem.agents.types import AcceptedSelection, SelectionProposal, Verdict
from xchem.errors import BackendUnavailableError, DialogueError, ProposalError
from xchem.physics_rules import default_registry
from xchem.properties import DESCRIPTOR_BANK, TargetProperty

ACCEPT = {'validated': True, 'critique': 'fine'}
REJECT = {'validated': False, 'critique': 'add an electronic descriptor'}
GOOD = {'features': ['MolecularWeight', 'XLogP', 'PSA'], 'weights': [0.5, 0.3, 0.2], 'reasoning': 'size and polarity'}


def fixed_clock():
    return '2024-01-01T00:00:00+00:00'


class ExtractJsonTestCase(unittest.TestCase):

    def test_object_in_prose(self):
        text = 'Here you go:\n```json\n{"a": {"b": "}"}, "c": [1, 2]}\n```\nThanks {not json}'
        self.assertEqual(extract_json(text), {'a': {'b': '}'}, 'c': [1, 2]})

    def test_escaped_quote(self):
        self.assertEqual(extract_json('{"a": "say \\"{hi\\""}'), {'a': 'say "{hi"'})

    def test_no_object(self):
        self.assertIsNone(extract_json('no braces at all'))
        self.assertIsNone(extract_json('{"a": 1'))
        self.assertIsNone(extract_json('{a: 1}'))
        self.assertIsNone(extract_json('{a: 1} and {b: 2}'))

    def test_skips_pairs_that_do_not_decode(self):
        self.assertEqual(extract_json('note {bad} then {"a": 1}'), {'a': 1})
        self.assertEqual(extract_json('draft {"a": 1 {"validated": true}'), {'validated': True})
        reply = 'Weights {w_i} sum to one:\n{"features": ["PSA"], "weights": [1.0]}'
        self.assertEqual(extract_json(reply), {'features': ['PSA'], 'weights': [1.0]})

    def test_request_block_round_trip(self):
        messages = selector_messages('lumo', DESCRIPTOR_BANK, ['too textual'], default_registry())
        request = find_request(messages, 'select_descriptors')
        self.assertEqual(request['target'], 'lumo')
        self.assertEqual(request['critiques'], ['too textual'])
        self.assertEqual(request['target_unit'], 'eV')
        self.assertNotIn('molecule', request)
        self.assertIn('round 1: too textual', messages[1]['content'])
        self.assertIsNone(find_request(messages, 'validate_selection'))

    def test_molecule_conditioning(self):
        messages = selector_messages('mu', DESCRIPTOR_BANK, [], default_registry(), {'IUPAC': 'ethanol'})
        self.assertEqual(find_request(messages, 'select_descriptors')['molecule'], {'IUPAC': 'ethanol'})


class ParseTestCase(unittest.TestCase):

    def test_renormalizes_inside_band(self):
        reply = json.dumps({'features': ['MolecularWeight', 'XLogP', 'PSA'], 'weights': [0.5, 0.3, 0.3]})
        proposal = parse_proposal(reply)
        self.assertAlmostEqual(proposal.weights[0], 0.4545, places=4)
        self.assertAlmostEqual(proposal.weights[1], 0.2727, places=4)
        self.assertAlmostEqual(proposal.weights[2], 0.2727, places=4)
        self.assertAlmostEqual(sum(proposal.weights), 1.0, places=12)

    def test_rejects_outside_band(self):
        with self.assertRaises(ProposalError):
            parse_proposal(json.dumps({'features': ['MolecularWeight', 'XLogP', 'PSA'], 'weights': [0.4, 0.4, 0.4]}))

    def test_rejects_two_features(self):
        with self.assertRaises(ProposalError):
            parse_proposal(json.dumps({'features': ['XLogP', 'PSA'], 'weights': [0.5, 0.5]}))

    def test_rejects_negative_and_mismatched(self):
        with self.assertRaises(ProposalError):
            parse_proposal(json.dumps({'features': ['MolecularWeight', 'XLogP', 'PSA'], 'weights': [1.2, -0.1, -0.1]}))
        with self.assertRaises(ProposalError):
            parse_proposal(json.dumps({'features': ['MolecularWeight', 'XLogP', 'PSA'], 'weights': [0.5, 0.5]}))

    def test_display_names_canonicalized(self):
        reply = 'Sure! {"features": ["Molecular Weight", "TPSA", "xlogp"], "weights": [0.4, 0.4, 0.2]}'
        self.assertEqual(parse_proposal(reply).subset, ('MolecularWeight', 'PSA', 'XLogP'))

    def test_verdict(self):
        self.assertEqual(parse_verdict(json.dumps(REJECT)), (False, REJECT['critique']))
        self.assertEqual(parse_verdict('{"validated": true}'), (True, ''))
        self.assertIsNone(parse_verdict('{"validated": false}'))
        self.assertIsNone(parse_verdict('{"validated": "yes"}'))
        self.assertIsNone(parse_verdict('I agree.'))


class TableSelectorTestCase(unittest.TestCase):

    def test_mu_top_three(self):
        proposal = select(TargetProperty.MU, DESCRIPTOR_BANK, [], TableSelectorBackend())
        self.assertEqual(proposal.subset, ('MolecularWeight', 'PSA', 'HBondAcceptors'))
        counts, importance = SELECTION_PRIOR['mu']
        total = importance[2] + importance[7] + importance[5]
        self.assertAlmostEqual(proposal.weights[0], importance[2] / total, places=12)
        self.assertAlmostEqual(sum(proposal.weights), 1.0, places=12)

    def test_orbital_targets(self):
        for target in ('homo', 'lumo', 'gap'):
            features, _ = table_selection(target)
            self.assertEqual(features, ['MolecularWeight', 'RotatableBonds', 'XLogP'])

    def test_widens_after_rejections(self):
        proposal = select('mu', DESCRIPTOR_BANK, ['a', 'b'], TableSelectorBackend())
        self.assertEqual(len(proposal.subset), 5)

    def test_history_bound(self):
        with self.assertRaises(DialogueError):
            select('mu', DESCRIPTOR_BANK, ['a', 'b', 'c'], TableSelectorBackend(), max_rounds=3)


class SelectTestCase(unittest.TestCase):

    def test_repair_after_unusable_reply(self):
        backend = ScriptedBackend([{'features': ['XLogP', 'PSA'], 'weights': [0.5, 0.5]}, GOOD])
        proposal = select('homo', DESCRIPTOR_BANK, [], backend)
        self.assertEqual(proposal.subset, ('MolecularWeight', 'XLogP', 'PSA'))
        self.assertEqual(len(backend.calls), 2)
        repair = backend.calls[1][-1]
        self.assertEqual(repair['role'], 'user')
        self.assertIn('between 3 and 5', repair['content'])

    def test_gives_up_after_two_attempts(self):
        backend = ScriptedBackend(['no json here'])
        with self.assertRaises(ProposalError):
            select('homo', DESCRIPTOR_BANK, [], backend)
        self.assertEqual(len(backend.calls), 2)


class ValidateTestCase(unittest.TestCase):

    def test_weight_sum_rejected_by_rules(self):
        backend = ScriptedBackend([ACCEPT])
        verdict = validate(SelectionProposal(('MolecularWeight', 'XLogP', 'PSA'), (0.4, 0.4, 0.4)), 'mu', backend)
        self.assertFalse(verdict.accept)
        self.assertEqual(verdict.source, 'rules')
        self.assertIn('sum', verdict.critique)
        self.assertEqual(backend.calls, [])

    def test_duplicates_rejected_by_rules(self):
        verdict = validate(SelectionProposal(('PSA', 'PSA', 'XLogP'), (0.4, 0.3, 0.3)), 'mu',
                           AcceptingValidatorBackend())
        self.assertFalse(verdict.accept)
        self.assertIn('duplicate_descriptor', [v.code for v in verdict.violations])

    def test_clean_proposal_accepted(self):
        verdict = validate(SelectionProposal(('MolecularWeight', 'XLogP', 'PSA'), (0.5, 0.3, 0.2)), 'lumo',
                           AcceptingValidatorBackend())
        self.assertTrue(verdict.accept)
        self.assertEqual(verdict.violations, ())

    def test_advisories_passed_to_backend(self):
        backend = ScriptedBackend([ACCEPT])
        validate(SelectionProposal(('MolecularWeight', 'PSA', 'RotatableBonds'), (0.5, 0.3, 0.2)), 'homo', backend)
        self.assertIn('koopmans-frontier-orbitals', backend.calls[0][1]['content'])

    def test_unparseable(self):
        backend = ScriptedBackend(['hmm', 'still thinking'])
        verdict = validate(SelectionProposal(('MolecularWeight', 'XLogP', 'PSA'), (0.5, 0.3, 0.2)), 'mu', backend)
        self.assertFalse(verdict.accept)
        self.assertEqual(verdict.critique, UNPARSEABLE_VERDICT)
        self.assertEqual(len(backend.calls), 2)

    def test_reject_needs_critique(self):
        with self.assertRaises(ValueError):
            Verdict(False, '')


class DialogueTestCase(unittest.TestCase):

    def test_accept_first_round(self):
        selection = run_dialogue('mu', (TableSelectorBackend(), AcceptingValidatorBackend()), clock=fixed_clock)
        self.assertEqual(selection.rounds_used, 1)
        self.assertFalse(selection.fallback_used)
        self.assertEqual(selection.subset, ('MolecularWeight', 'PSA', 'HBondAcceptors'))

    def test_reject_then_accept(self):
        selector = ScriptedBackend([GOOD])
        validator = ScriptedBackend([REJECT, ACCEPT])
        selection = run_dialogue('alpha', (selector, validator), clock=fixed_clock)
        self.assertEqual(selection.rounds_used, 2)
        self.assertEqual(len(selection.transcript), 2)
        self.assertFalse(selection.transcript[0].verdict.accept)
        self.assertTrue(selection.transcript[1].verdict.accept)
        second_request = find_request(selector.calls[1], 'select_descriptors')
        self.assertEqual(second_request['critiques'], [REJECT['critique']])

    def test_always_reject_falls_back(self):
        selector = TableSelectorBackend()
        selection = run_dialogue('gap', (selector, RejectingValidatorBackend()), max_rounds=3, clock=fixed_clock)
        self.assertTrue(selection.fallback_used)
        self.assertEqual(selection.rounds_used, 3)
        self.assertTrue(all(not r.verdict.accept for r in selection.transcript))
        # last proposal is the widest one
        self.assertEqual(selection.subset, selection.transcript[-1].proposal.subset)
        self.assertEqual(len(selection.subset), 5)
        self.assertAlmostEqual(sum(selection.weights), 1.0, places=12)

    def test_selector_never_usable(self):
        with self.assertRaises(DialogueError):
            run_dialogue('mu', (ScriptedBackend(['nothing']), AcceptingValidatorBackend()), max_rounds=2)

    def test_unusable_round_then_good(self):
        selector = ScriptedBackend(['nothing', 'still nothing', GOOD])
        selection = run_dialogue('r2', (selector, AcceptingValidatorBackend()), clock=fixed_clock)
        self.assertEqual(selection.rounds_used, 2)
        self.assertIsNone(selection.transcript[0].proposal)
        self.assertEqual(selection.transcript[0].verdict.source, 'selector')

    def test_transport_failure_propagates(self):
        selector = mock.Mock()
        selector.complete.side_effect = BackendUnavailableError('down')
        with self.assertRaises(BackendUnavailableError):
            run_dialogue('mu', (selector, AcceptingValidatorBackend()))

    def test_deterministic(self):
        backends = (TableSelectorBackend(), RejectingValidatorBackend())
        a = run_dialogue('u0', backends, clock=fixed_clock)
        b = run_dialogue('u0', backends, clock=fixed_clock)
        self.assertEqual(a.to_dict(), b.to_dict())

    def test_bad_round_bound(self):
        with self.assertRaises(ValueError):
            run_dialogue('mu', (TableSelectorBackend(), AcceptingValidatorBackend()), max_rounds=0)


class HttpChatBackendTestCase(unittest.TestCase):

    def test_payload(self):
        session = mock.Mock()
        session.post.return_value = mock.Mock(status_code=200, json=mock.Mock(
            return_value={'message': {'role': 'assistant', 'content': 'hello'}}))
        backend = HttpChatBackend('http://chat.local', 'llama3.1', session=session)
        self.assertEqual(backend.complete([{'role': 'user', 'content': 'hi'}]), 'hello')
        payload = session.post.call_args[1]['json']
        self.assertEqual(payload['temperature'], 0.0)
        self.assertFalse(payload['stream'])
        self.assertEqual(session.post.call_args[0][0], 'http://chat.local/api/chat')


class StoreTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def dialogue(self, molecule_id, target='homo', validator=None):
        validator = validator or ScriptedBackend([REJECT, ACCEPT])
        return run_dialogue(target, (TableSelectorBackend(), validator), molecule_id=molecule_id, clock=fixed_clock)

    def test_replay_equals_live(self):
        path = os.path.join(self.tmp.name, 'transcripts.jsonl')
        writer = TranscriptWriter(path, default_registry().sha256)
        live = [self.dialogue('qm9_000001'), self.dialogue('qm9_000002', 'mu', RejectingValidatorBackend())]
        for selection in live:
            writer.write(selection)
        replayed = replay_transcript(read_jsonl(path))
        self.assertEqual(replayed, live)
        self.assertEqual([s.to_dict() for s in replayed], [s.to_dict() for s in live])

    def test_transcript_rows(self):
        selection = self.dialogue('qm9_000003')
        rows = transcript_records(selection, 'abc')
        self.assertEqual([r['round'] for r in rows], [1, 2])
        self.assertEqual({r['molecule_id'] for r in rows}, {'qm9_000003'})
        self.assertEqual(rows[0]['rules_sha256'], 'abc')
        self.assertFalse(rows[0]['verdict']['validated'])

    def test_rerun_supersedes(self):
        path = os.path.join(self.tmp.name, 'transcripts.jsonl')
        writer = TranscriptWriter(path)
        writer.write(self.dialogue('qm9_000001', validator=RejectingValidatorBackend()))
        writer.write(self.dialogue('qm9_000001'))
        replayed = replay_transcript(read_jsonl(path))
        self.assertEqual(len(replayed), 1)
        self.assertFalse(replayed[0].fallback_used)

    def test_replay_strictness(self):
        rows = transcript_records(self.dialogue('qm9_000001'))
        gap = [rows[1]]
        with self.assertRaises(DialogueError):
            replay_transcript([rows[0], {'round': 2}], strict=True)
        self.assertEqual(replay_transcript(gap + [{'target': 'homo'}], strict=False), [])

    def test_malformed_lines_skipped(self):
        path = os.path.join(self.tmp.name, 'transcripts.jsonl')
        TranscriptWriter(path).write(self.dialogue('qm9_000001'))
        with open(path, 'a') as f:
            f.write('{"truncated": \n[1, 2]\n')
        skipped = []
        rows = list(read_jsonl(path, skipped))
        self.assertEqual(len(rows), 2)
        self.assertEqual(skipped, [3, 4])

    def test_selection_store(self):
        path = os.path.join(self.tmp.name, 'sub', 'selections.jsonl')
        store = SelectionStore(path)
        first = self.dialogue('qm9_000001', validator=RejectingValidatorBackend())
        store.put(first)
        store.put(self.dialogue('qm9_000001'))
        store.put(self.dialogue('qm9_000002', 'mu'))
        reloaded = SelectionStore(path)
        self.assertEqual(len(reloaded), 2)
        self.assertIn(('qm9_000001', 'homo'), reloaded)
        self.assertNotIn(('qm9_000001', 'mu'), reloaded)
        self.assertFalse(reloaded.get('qm9_000001', 'homo').fallback_used)
        self.assertEqual(list(reloaded.for_target('mu')), ['qm9_000002'])
        self.assertEqual(reloaded.get('qm9_000002', TargetProperty.MU).transcript, ())

    def test_accepted_selection_round_trip(self):
        selection = self.dialogue('qm9_000004')
        again = AcceptedSelection.from_dict(json.loads(json.dumps(selection.to_dict())))
        self.assertEqual(again, selection)
        self.assertEqual(again.transcript, selection.transcript)
        self.assertEqual(again.rationale, selection.rationale)


if __name__ == '__main__':
    unittest.main()
