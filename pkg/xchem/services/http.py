"""JSON-over-HTTP with bounded retries, shared by the chat and embedding clients."""
import logging

import requests
from tenacity import RetryError, retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from xchem import telemetry
from xchem.errors import BackendUnavailableError, ConfigurationError

logger = logging.getLogger(__name__)


def post_json(session, url, payload, timeout, retries, backend, wait_min=0.5, wait_max=8.0):
    '''
    POST `payload` and return the decoded JSON body.

    Transport errors, HTTP 429 and 5xx are retried with exponential backoff;
    when every attempt fails a BackendUnavailableError is raised. Other 4xx
    answers are configuration problems and are not retried.
    '''

    @retry(stop=stop_after_attempt(max(1, retries)),
           wait=wait_exponential(multiplier=wait_min, min=wait_min, max=wait_max),
           retry=retry_if_exception_type(BackendUnavailableError))
    def attempt():
        try:
            response = session.post(url, json=payload, timeout=timeout)
        except requests.RequestException as error:
            telemetry.backend_requests.labels(backend=backend, outcome='transport_error').inc()
            logger.warning('%s request to %s failed: %s', backend, url, error)
            raise BackendUnavailableError(str(error))
        status = response.status_code
        if status == 429 or status >= 500:
            telemetry.backend_requests.labels(backend=backend, outcome='http_{0}'.format(status)).inc()
            logger.warning('%s backend at %s answered HTTP %s', backend, url, status)
            raise BackendUnavailableError('HTTP {0}'.format(status))
        if status >= 400:
            telemetry.backend_requests.labels(backend=backend, outcome='http_{0}'.format(status)).inc()
            raise ConfigurationError('{0} backend rejected the request: HTTP {1}: {2}'.format(
                backend, status, response.text[:300]))
        telemetry.backend_requests.labels(backend=backend, outcome='ok').inc()
        try:
            return response.json()
        except ValueError:
            raise ConfigurationError('{0} backend at {1} did not answer with JSON'.format(backend, url))

    try:
        return attempt()
    except RetryError as error:
        raise BackendUnavailableError('{0} backend at {1} unavailable after {2} attempts: {3}'.format(
            backend, url, retries, error.last_attempt.exception()))
