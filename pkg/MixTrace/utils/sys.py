import time

import psutil

from MixTrace.misc import _boot_
from MixTrace.utils.formatters import convert_bytes, get_readable_time


async def run_stats():
    uptime = int(time.time() - _boot_)
    UP = f"{get_readable_time(uptime)}"
    CPU = f"{psutil.cpu_percent(interval=None)}%"
    RAM = f"{psutil.virtual_memory().percent}%"
    RSS = convert_bytes(psutil.Process().memory_info().rss)
    return UP, CPU, RAM, RSS
