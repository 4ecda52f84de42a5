import logging
import json
import logging.config
from pathlib import Path


def logging_setup(config_path):
    """
    Sets up and configures the logging module using a JSON config file.

    Parent directories of file handlers are created first. When the file does not exist the
    root logger falls back to WARNING on stderr.

    Args:
        config_path (str or Path): Path to the logging configuration file.

    Returns:
        logging.Logger: The configured root logger.
    """
    config_path = Path(config_path)
    if not config_path.is_file():
        logging.basicConfig(level=logging.WARNING)
        logging.getLogger("Harness_Log").warning(
            f"Logging configuration {config_path} not found, using defaults")
        return logging.getLogger()

    with open(config_path, encoding="utf-8") as f_in:
        config = json.load(f_in)

    for handler in config.get("handlers", {}).values():
        filename = handler.get("filename")
        if filename:
            Path(filename).parent.mkdir(parents=True, exist_ok=True)

    logging.config.dictConfig(config)
    return logging.getLogger()
