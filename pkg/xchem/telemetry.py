"""Prometheus counters for the batch phases and the stub server."""
import logging

from prometheus_client import REGISTRY, Counter, write_to_textfile

logger = logging.getLogger(__name__)

dialogue_rounds = Counter(
    'xchem_dialogue_rounds', 'Selector/Validator rounds run', ['target'])
verdicts = Counter(
    'xchem_verdicts', 'Validator verdicts by outcome and source', ['target', 'outcome', 'source'])
fallbacks = Counter(
    'xchem_dialogue_fallbacks', 'Dialogues that exhausted every round', ['target'])
backend_requests = Counter(
    'xchem_backend_requests', 'Requests sent to chat and embedding backends', ['backend', 'outcome'])
embedding_cache = Counter(
    'xchem_embedding_cache_lookups', 'Embedding cache lookups', ['result'])


def export_textfile(path):
    '''Write the default registry for the node-exporter textfile collector.'''
    if not path:
        return
    write_to_textfile(path, REGISTRY)
    logger.info('wrote metrics to %s', path)
