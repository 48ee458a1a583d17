from flask import jsonify, request
from schema import And, Optional, Or, Schema, SchemaError

from xchem.agents.backends import AcceptingValidatorBackend, RejectingValidatorBackend, TableSelectorBackend
from xchem.agents.prompts import find_request
from xchem.server import app
from xchem.server.routes.prometheus import track_requests

CHAT_SCHEMA = Schema({
    'model': And(str, len),
    'messages': And([{'role': Or('system', 'user', 'assistant'), 'content': str}], len),
    Optional('temperature'): Or(int, float),
    Optional('stream'): bool,
    Optional('options'): dict,
})

# model name -> stub; other names are routed by the request block they carry
STUBS = {
    'table-selector': TableSelectorBackend(),
    'accepting-validator': AcceptingValidatorBackend(),
    'rejecting-validator': RejectingValidatorBackend(),
}


def stub_for(data):
    if data['model'] in STUBS:
        return STUBS[data['model']]
    if find_request(data['messages'], 'select_descriptors') is not None:
        return STUBS['table-selector']
    return STUBS['accepting-validator']


@app.route('/api/chat', methods=['POST'])
@track_requests
def chat():
    try:
        data = CHAT_SCHEMA.validate(request.get_json(silent=True))
    except SchemaError as error:
        return jsonify(message=str(error)), 400
    content = stub_for(data).complete(data['messages'])
    return jsonify(model=data['model'], message={'role': 'assistant', 'content': content}, done=True)
