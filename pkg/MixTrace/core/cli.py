import asyncio
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from typing import Awaitable, Callable, Dict

import uvloop

uvloop.install()

from ..logging import LOGGER
from ..utils.autoclear import auto_clean, keep_outputs
from ..utils.exceptions import MixTraceError
from ..utils.sys import run_stats


class MixTrace:
    """Command registry and runner shared by every plugin."""

    def __init__(self):
        LOGGER(__name__).info("Starting MixTrace...")
        self.name = "MixTrace"
        self.commands: Dict[str, Callable[..., Awaitable]] = {}
        self.helps: Dict[str, str] = {}
        self.pool = None

    def on_command(self, name: str, help: str = ""):
        def decorator(func):
            self.commands[name] = func
            self.helps[name] = help
            return func

        return decorator

    async def run_sync(self, func, *args, **kwargs):
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(self.pool, partial(func, *args, **kwargs))

    async def dispatch(self, name: str, cfg) -> int:
        """Run one command; returns the process exit code."""
        handler = self.commands[name]
        self.pool = ThreadPoolExecutor(max_workers=cfg.workers, thread_name_prefix=self.name)
        try:
            await handler(self, cfg)
        except MixTraceError as e:
            LOGGER(__name__).error(f"{name} failed: {e}")
            await auto_clean()
            return e.exit_code
        except Exception as ex:
            LOGGER(__name__).exception(f"{name} failed.\n  Reason : {type(ex).__name__}.")
            await auto_clean()
            return 2
        finally:
            self.pool.shutdown(wait=True)
            self.pool = None
        keep_outputs()
        UP, CPU, RAM, RSS = await run_stats()
        LOGGER(__name__).info(f"{name} done. Uptime {UP}, CPU {CPU}, RAM {RAM}, process {RSS}.")
        return 0
