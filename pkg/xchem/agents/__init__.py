from xchem.agents.backends import (AcceptingValidatorBackend, ChatBackend, HttpChatBackend, RejectingValidatorBackend,
                                   ScriptedBackend, TableSelectorBackend, make_chat_backends)
from xchem.agents.dialogue import replay_transcript, run_dialogue, select, validate
from xchem.agents.store import SelectionStore, TranscriptWriter
from xchem.agents.types import AcceptedSelection, DialogueRound, SelectionProposal, Verdict
