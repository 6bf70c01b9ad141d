import logging


def create_logger(level='INFO', handler_type='stream', path='',
                  name='fpsim'):
    """Defines a logger with optional level"""

    # Recover the associate value to the specified level
    level_value = getattr(logging, level, 0)

    logger = logging.getLogger(name)
    logger.setLevel(level_value)
    # Loggers are process-wide, so a second call replaces the handlers
    # instead of stacking them.
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = False

    # create the handler depending on the desired type
    if handler_type == 'stream':
        handler = logging.StreamHandler()
    elif handler_type == 'file':
        handler = logging.FileHandler(path, mode='w')
    else:
        handler = logging.NullHandler()

    handler.setLevel(level_value)

    # create formatter
    formatter = logging.Formatter(
        "%(module) 12s: L%(lineno) 4s %(funcName) 22s"
        " | %(levelname) -8s  --> %(message)s")

    # add formatter to the handler
    handler.setFormatter(formatter)

    # add the handler to logger
    logger.addHandler(handler)

    return logger


def add_file_handler(logger, path, level='DEBUG'):
    """Mirror the logger into a file, used for the run.log of a run"""
    level_value = getattr(logging, level, 0)
    handler = logging.FileHandler(path, mode='w')
    handler.setLevel(level_value)
    handler.setFormatter(logging.Formatter(
        "%(asctime)s %(module)s: L%(lineno)s | %(levelname)s --> %(message)s"))
    logger.addHandler(handler)
    return handler


def get_logger(logger=None):
    """Return the given logger, or the package one"""
    if logger is not None:
        return logger
    return logging.getLogger('fpsim')
