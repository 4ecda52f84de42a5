from cli.commands import main as run_cli
from pathlib import Path
import json
import sys


if __name__ == "__main__":

    folder_path = Path(__file__).parent

    with open(folder_path / "experiment_configuration.json") as f:
        experiment_config = json.load(f)

        log_config_path = folder_path / experiment_config["log_config"]

    sys.exit(run_cli(["--log-config", str(log_config_path),
                      "run", str(folder_path / "experiment_configuration.json")]))
