from __future__ import annotations

from utils.convert import struct_to_time
import config

from time import time
from typing import Literal
import os
import sys

_log_dir = {'path': config.LOG_DIR}

def set_log_dir(path: str) -> None:
    """
    Redirects log.log (and relative metric files) to `path`
    :param path: directory, created when missing
    :return: None
    """
    os.makedirs(path, exist_ok=True)
    _log_dir['path'] = path.rstrip('/') + '/'

def get_log_dir() -> str:
    return _log_dir['path']

def log(ctx, text_data, options=None, log_type: Literal['command', 'function', 'text', 'error', 'metric']='text') -> None:
    """
    Logs data to the console and to the log file
    :param ctx: name of the component (command, parameter path ...) or None
    :param text_data: The data to be logged
    :param options: options to be logged with a command or function call
    :param log_type: ('command', 'function', 'text', 'error', 'metric') - type of log
    :return: None
    """
    now_time_str = struct_to_time(time())

    if log_type == 'command':
        message = f"{now_time_str} | C {ctx} | Command ({text_data}) was requested -> {options}"
    elif log_type == 'function':
        message = f"{now_time_str} | F {ctx} | {text_data} -> {options}"
    elif log_type == 'text':
        message = f"{now_time_str} | T {ctx} | {text_data}"
    elif log_type == 'metric':
        message = f"{now_time_str} | M {ctx} | {text_data}"
    elif log_type == 'error':
        message = f"{now_time_str} | E {ctx} | {text_data} -> {options}"
    else:
        raise ValueError('Wrong log_type')

    if log_type == 'error':
        print(message, file=sys.stderr, flush=True)
    else:
        print(message, flush=True)

    log_dir = get_log_dir()
    os.makedirs(log_dir, exist_ok=True)
    with open(f"{log_dir}log.log", "a", encoding="utf-8") as f:
        f.write(message + "\n")

def collect_metrics(path: str, record: str) -> None:
    """
    Appends one record to a metrics file (one record per line, no timestamp)
    :param path: metrics file, relative paths resolve against the log directory
    :param record: space separated values
    :return: None
    """
    if not os.path.isabs(path):
        path = os.path.join(get_log_dir(), path)
    with open(path, "a", encoding="utf-8") as f:
        f.write(record + "\n")
