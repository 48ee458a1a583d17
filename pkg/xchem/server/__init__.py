"""
Stub chat and embedding server for exercising the HTTP backends offline.

    gunicorn xchem.server:app
"""

from flask import Flask

app = Flask(__name__)

import xchem.server.routes  # noqa: E402,F401
