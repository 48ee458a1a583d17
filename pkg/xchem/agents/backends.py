"""
Chat backends for the Selector and Validator.

`HttpChatBackend` talks to a local chat-model server. The other classes are
deterministic stand-ins that read the JSON request block at the top of the
user message and answer without any model.
"""
import json
import logging
from abc import ABC, abstractmethod

import requests
from schema import Schema, SchemaError

from xchem.agents.prompts import find_request
from xchem.errors import ConfigurationError
from xchem.properties import DESCRIPTOR_BANK
from xchem.services.http import post_json

logger = logging.getLogger(__name__)

CHAT_RESPONSE_SCHEMA = Schema({'message': {'content': str}}, ignore_extra_keys=True)

# Per target, how often each descriptor was kept across a full QM9 run of the
# agents, and its mean normalized importance, both in DESCRIPTOR_BANK order.
SELECTION_PRIOR = {
    'mu': ((2340, 2734, 21597, 13378, 14935, 16893, 8134, 18146, 79),
           (.26, .26, .28, .24, .22, .24, .23, .29, .18)),
    'alpha': ((951, 2328, 22223, 14576, 6458, 9241, 18344, 15816, 81),
              (.26, .27, .31, .26, .20, .21, .25, .28, .18)),
    'homo': ((2661, 3548, 21205, 15724, 9942, 10478, 16430, 11820, 190),
             (.27, .27, .34, .31, .23, .23, .30, .27, .21)),
    'lumo': ((2185, 3194, 19068, 16700, 9680, 13294, 17484, 10650, 175),
             (.26, .26, .28, .82, .22, .23, .25, .26, .20)),
    'gap': ((1455, 2537, 20497, 16425, 8570, 9592, 17726, 10453, 157),
            (.26, .64, .31, .26, .23, .22, .28, .28, .18)),
    'r2': ((1001, 1544, 22064, 7553, 3022, 5992, 21634, 21964, 117),
           (.27, .28, .39, .25, .21, .22, .28, .29, .19)),
    'zpve': ((1115, 2594, 23092, 9477, 10249, 10335, 16997, 15379, 113),
             (.26, .28, .35, .24, .27, .25, .26, .31, .18)),
    'u0': ((1116, 2668, 22606, 11769, 10563, 10494, 15230, 11980, 83),
           (.26, .44, .35, .29, .23, .23, .28, .27, .17)),
    'u298': ((728, 1614, 23925, 14419, 12016, 9394, 15722, 13073, 74),
             (.25, .28, .33, .26, .22, .23, .24, .27, .18)),
}


class ChatBackend(ABC):
    model = 'stub'
    temperature = 0.0

    @abstractmethod
    def complete(self, messages):
        '''Send the conversation and return the reply text.'''


class HttpChatBackend(ChatBackend):
    '''POST {model, messages, temperature, stream: false} -> {message: {content}}.'''

    def __init__(self, url, model, temperature=0.0, timeout=120.0, retries=3, session=None, backend='chat'):
        self.url = url.rstrip('/')
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()
        self.backend = backend

    def complete(self, messages):
        payload = {
            'model': self.model,
            'messages': list(messages),
            'stream': False,
            'options': {'temperature': self.temperature},
            'temperature': self.temperature,
        }
        data = post_json(self.session, self.url + '/api/chat', payload, self.timeout, self.retries, self.backend)
        try:
            return CHAT_RESPONSE_SCHEMA.validate(data)['message']['content']
        except SchemaError as error:
            raise ConfigurationError('malformed chat response: {0}'.format(error))


def _reply(obj):
    return json.dumps(obj, sort_keys=True)


def table_selection(target, bank=DESCRIPTOR_BANK, size=3):
    '''
    The `size` most frequently kept descriptors for `target` (ties broken by
    bank order) with weights proportional to their importance.
    '''
    counts, importance = SELECTION_PRIOR[str(getattr(target, 'value', target))]
    ranked = sorted(
        (i for i, name in enumerate(DESCRIPTOR_BANK) if name in bank),
        key=lambda i: (-counts[i], i))[:size]
    total = sum(importance[i] for i in ranked)
    return [DESCRIPTOR_BANK[i] for i in ranked], [importance[i] / total for i in ranked]


class TableSelectorBackend(ChatBackend):
    '''Selector answering from SELECTION_PRIOR; each prior rejection widens the subset by one, up to 5.'''

    model = 'table-selector'

    def complete(self, messages):
        request = find_request(messages, 'select_descriptors')
        if request is None:
            return 'No selection request found.'
        rejections = len(request.get('critiques', []))
        size = 3 + min(rejections, 2)
        features, weights = table_selection(request['target'], request.get('bank', DESCRIPTOR_BANK), size)
        return _reply({
            'features': features,
            'weights': weights,
            'reasoning': 'Most frequently retained descriptors for {0}.'.format(request['target']),
        })


class AcceptingValidatorBackend(ChatBackend):
    model = 'accepting-validator'

    def complete(self, messages):
        return _reply({'validated': True, 'critique': 'Units, scaling and complementarity are acceptable.'})


class RejectingValidatorBackend(ChatBackend):
    model = 'rejecting-validator'

    def __init__(self, critique='Descriptor subset is not physically justified for this target; revise it.'):
        self.critique = critique

    def complete(self, messages):
        return _reply({'validated': False, 'critique': self.critique})


class ScriptedBackend(ChatBackend):
    '''
    Replays `replies` in order, repeating the last one once exhausted. Every
    received conversation is kept in `calls`.
    '''

    model = 'scripted'

    def __init__(self, replies):
        if not replies:
            raise ValueError('ScriptedBackend needs at least one reply')
        self.replies = list(replies)
        self.calls = []

    def complete(self, messages):
        self.calls.append(list(messages))
        index = min(len(self.calls), len(self.replies)) - 1
        reply = self.replies[index]
        return reply if isinstance(reply, str) else _reply(reply)


def make_chat_backends(config):
    '''(selector, validator) as named by `config.backends`.'''
    backends = config.backends

    def http(settings, name):
        return HttpChatBackend(backends.chat_url, settings.model, settings.temperature,
                               timeout=backends.timeout, retries=backends.retries, backend=name)

    if backends.selector.kind == 'table':
        selector = TableSelectorBackend()
    else:
        selector = http(backends.selector, 'selector')

    if backends.validator.kind == 'accept':
        validator = AcceptingValidatorBackend()
    elif backends.validator.kind == 'reject':
        validator = RejectingValidatorBackend()
    else:
        validator = http(backends.validator, 'validator')
    logger.debug('chat backends: selector=%s validator=%s', selector.model, validator.model)
    return selector, validator
