from MixTrace.core.cli import MixTrace

from .logging import LOGGER

app = MixTrace()
