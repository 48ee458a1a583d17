from flask import jsonify, request
from schema import And, Or, Schema, SchemaError, Use

from xchem.embeddings import EMBEDDING_DIM, HashingEmbeddingBackend
from xchem.server import app
from xchem.server.routes.prometheus import track_requests

EMBED_SCHEMA = Schema({
    'model': And(str, len),
    'input': Or(And(str, len, Use(lambda s: [s])), And([And(str, len)], len)),
}, ignore_extra_keys=True)

backend = HashingEmbeddingBackend(dim=EMBEDDING_DIM)


@app.route('/api/embed', methods=['POST'])
@track_requests
def embed():
    try:
        data = EMBED_SCHEMA.validate(request.get_json(silent=True))
    except SchemaError as error:
        return jsonify(message=str(error)), 400
    vectors = backend.embed_batch(data['input'])
    return jsonify(model=data['model'], vectors=vectors.tolist())
