from os.path import dirname, join, normpath

from flask import jsonify

from xchem.server import app

SWAGGER_PATH = normpath(join(dirname(__file__), '..', '..', '..', 'public', 'swagger.yaml'))


@app.route("/swagger/api")
def swagger_api():
    try:
        with open(SWAGGER_PATH, "r", encoding='utf-8') as f:
            content = f.read()
    except OSError:
        return jsonify(message='swagger.yaml is not shipped with this install'), 404
    return "<pre>"+content+"</pre>"
