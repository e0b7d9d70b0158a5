import os

from config import autoclean

from ..logging import LOGGER


async def auto_clean():
    """Remove every output the failed command already wrote."""
    while autoclean:
        rem = autoclean.pop()
        try:
            os.remove(rem)
        except FileNotFoundError:
            pass
        except OSError as e:
            LOGGER(__name__).warning(f"Could not remove partial output {rem}: {e}")


def keep_outputs():
    autoclean.clear()
