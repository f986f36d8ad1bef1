# -*- coding: utf-8 -*-
"""
Key Material Masking and Logger Setup
=====================================
Masks cluster keys and link keys before log records reach any handler, and
configures the package loggers from the STEGMESH_LOG environment variable.
"""

import logging
import os
import re
from typing import Optional, Union

# Patterns to mask
MASKS = [
    (re.compile(r'\b(key=)([0-9a-fA-F]{64})\b'), r'\1***MASKED***'),
    (re.compile(r'\b(secret=)([0-9a-fA-F]{16,})\b'), r'\1***MASKED***'),
]

LEVELS = {
    "off": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

ENV_VAR = "STEGMESH_LOG"
FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _mask(text: str) -> str:
    for pattern, replacement in MASKS:
        if pattern.search(text):
            text = pattern.sub(replacement, text)
    return text


class KeyMaterialFilter(logging.Filter):
    """Masks hex key material in log records."""

    def filter(self, record):
        if isinstance(record.msg, str):
            record.msg = _mask(record.msg)

        # Arguments too (e.g. log.debug("key=%s", key.hex()) after formatting)
        if record.args and isinstance(record.args, tuple):
            record.args = tuple(_mask(a) if isinstance(a, str) else a for a in record.args)
        if record.args and isinstance(record.msg, str):
            try:
                record.msg = _mask(record.msg % record.args)
                record.args = ()
            except (TypeError, ValueError):
                pass
        return True


def level_from_env(default: str = "off") -> int:
    value = os.environ.get(ENV_VAR, default).strip().lower()
    return LEVELS.get(value, logging.WARNING)


def setup_logger(name: str = "stegmesh", level: Optional[Union[int, str]] = None,
                 log_file: Optional[str] = None) -> logging.Logger:
    """Configure the package loggers; safe to call more than once."""
    if level is None:
        level = level_from_env()
    elif isinstance(level, str):
        level = LEVELS.get(level.lower(), logging.WARNING)

    formatter = logging.Formatter(FORMAT)
    handlers = []

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler.addFilter(KeyMaterialFilter())
    handlers.append(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        file_handler.addFilter(KeyMaterialFilter())
        handlers.append(file_handler)

    # "src" carries every module logger obtained with getLogger(__name__)
    for logger_name in (name, "src"):
        logger = logging.getLogger(logger_name)
        logger.setLevel(level)
        logger.handlers = list(handlers)
        logger.propagate = False

    return logging.getLogger(name)
