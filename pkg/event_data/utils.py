import logging
import os
import sys
from datetime import datetime


def make_path(path0, name):
    """
    create folder

    :param path0:   path to the parent folder
    :param name:    folder name
    :return: folder path with trailing slash
    """
    path = os.path.join(path0, datetime.now().strftime("%Y-%m-%d-%H-%M-%S") + "_" + name) + "/"
    os.makedirs(path, exist_ok=True)
    return path


def initialize_logging(path_log, level=logging.INFO, name="run"):
    """
    log to stdout and, if path_log is set, to logfile.txt in a new timestamped folder below path_log

    :return: run folder or None
    """
    handlers = [logging.StreamHandler(sys.stdout)]
    run_path = None
    if path_log is not None:
        run_path = make_path(path_log, name)
        handlers.insert(0, logging.FileHandler(run_path + 'logfile.txt'))
    logging.basicConfig(level=level, format="%(asctime)s [%(levelname)s] %(message)s", handlers=handlers, force=True)
    return run_path
