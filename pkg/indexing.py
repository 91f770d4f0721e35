"""On-disk cache of fitted noise models"""

import logging
import os
from typing import Any, Dict, Optional

import constants
from noisemodel import NoiseModel
from utils import config_hash, ensure_directory

logger = logging.getLogger(__name__)


class NoiseModelStore:
    def __init__(self, cache_dir: str = constants.MODEL_CACHE_DIR):
        self.cache_dir = cache_dir
        ensure_directory(self.cache_dir)

    def key(self, description: Dict[str, Any]) -> str:
        """Cache key of a fit description (data identity and EM settings)"""
        return config_hash(description)[:16]

    def path(self, key: str) -> str:
        return os.path.join(self.cache_dir, f"model_{key}.json")

    def get(self, description: Dict[str, Any]) -> Optional[NoiseModel]:
        """Cached model for the description, if any"""
        path = self.path(self.key(description))
        if not os.path.exists(path):
            return None
        logger.info(f"CACHE_HIT | Path={path}")
        return NoiseModel.load(path)

    def put(self, description: Dict[str, Any], model: NoiseModel) -> str:
        """Store a model and return its file path"""
        path = self.path(self.key(description))
        model.save(path)
        return path
