from flask import jsonify

from xchem.embeddings import EMBEDDING_DIM
from xchem.server import app
from xchem.server.routes.chat import STUBS


@app.route("/health")
def health():
    """health route, with the chat stubs and embedding size this server offers"""
    state = {"status": "UP", "chat_models": sorted(STUBS), "embedding_dim": EMBEDDING_DIM}
    return jsonify(state)
