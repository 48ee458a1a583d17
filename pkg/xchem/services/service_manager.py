"""Process-wide registry of the backends a command works with."""
import threading

_services = {}
_lock = threading.Lock()


def get(name):
    try:
        return _services[name]
    except KeyError:
        raise KeyError('service {0!r} is not registered; call init_services first'.format(name))


def set(name, service):
    with _lock:
        _services[name] = service
    return service


def getNames():
    return sorted(_services.keys())


def getAll():
    return dict(_services)


def clear():
    with _lock:
        _services.clear()
