import logging
import time
from argparse import Namespace
from typing import Any, Awaitable, Callable, Dict

logger = logging.getLogger(__name__)

Handler = Callable[[Namespace, Dict[str, Any]], Awaitable[Any]]


class LoggingMiddleware:
    async def __call__(
        self,
        handler: Handler,
        args: Namespace,
        data: Dict[str, Any],
    ) -> Any:
        config = data.get("config")
        config_hash = config.config_hash() if config is not None else None
        logger.info("Running command=%s config_hash=%s", args.command, config_hash)
        started = time.perf_counter()
        try:
            result = await handler(args, data)
            logger.info("Command %s finished in %.2f s", args.command, time.perf_counter() - started)
            return result
        except Exception:
            logger.exception("Error while running command=%s", args.command)
            raise
