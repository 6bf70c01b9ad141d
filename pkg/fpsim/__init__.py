"""Federated poisoning simulator"""
import os

try:
    from importlib.metadata import PackageNotFoundError, version
    __version__ = version('fpsim')
except (ImportError, PackageNotFoundError):
    _VERSION_FILE = os.path.join(os.path.dirname(os.path.dirname(
        os.path.abspath(__file__))), 'VERSION')
    try:
        with open(_VERSION_FILE) as _stream:
            __version__ = _stream.read().strip()
    except OSError:
        __version__ = 'unknown'
