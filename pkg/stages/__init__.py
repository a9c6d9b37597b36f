from typing import Any, Dict, List
from datetime import datetime
import json
import logging

from config.dewarp_config import SYSTEM_CONFIG


class BaseStage:
    """
    Base class for pipeline stages.
    Each stage owns its config and a PRIVATE interaction history; stages
    exchange data only through their process() results.
    """

    name = "Stage"

    def __init__(self, config: Dict[str, Any]):
        """
        Initialize the stage with its configuration.

        Args:
            config: Dictionary of hyperparameters (see config/dewarp_config.py)
        """
        self.config = dict(config)
        self.logger = logging.getLogger(f"dewarp.{self.name.lower().replace(' ', '_')}")

        # Interaction history for debugging / run reports
        self.interaction_history: List[Dict] = []

    def log_interaction(self, interaction_type: str, data: Dict[str, Any]):
        """Record an interaction and emit it as indented JSON"""
        log_entry = {
            "timestamp": datetime.now().isoformat(),
            "stage": self.name,
            "type": interaction_type,
            "data": data
        }
        self.interaction_history.append(log_entry)

        if not SYSTEM_CONFIG["enable_logging"]:
            return
        json_str = json.dumps(data, indent=2, default=str)
        indented_json = '\n'.join('    ' + line for line in json_str.split('\n'))
        self.logger.info("[%s] %s:\n%s", self.name, interaction_type, indented_json)

    def process(self, *args, **kwargs):
        """Run the stage"""
        raise NotImplementedError("Subclasses must implement process()")
