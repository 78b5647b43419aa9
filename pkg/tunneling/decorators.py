import logging
import time
from functools import wraps

import numpy as np

from .exceptions import SimulationError

logger = logging.getLogger(__name__)


def numerical_stage(name):
    """
    Decorator that:
    - logs entry and wall time of a numerical stage
    - turns linear-algebra and floating point failures into SimulationError
    - lets SimulationError subclasses through untouched
    """

    def decorator(func):
        @wraps(func)
        def _wrapped(*args, **kwargs):
            logger.debug(f"{name}: start")
            started = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except SimulationError:
                raise
            except (np.linalg.LinAlgError, FloatingPointError) as exc:
                logger.error(f"{name}: {exc}")
                raise SimulationError(f"{name} failed: {exc}") from exc
            logger.debug(f"{name}: done in {time.perf_counter() - started:.3f}s")
            return result

        return _wrapped

    return decorator
