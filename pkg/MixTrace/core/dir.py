import os

from ..logging import LOGGER


def dirr(output_dir: str, *subdirs: str):
    for sub in ("",) + subdirs:
        os.makedirs(os.path.join(output_dir, sub), exist_ok=True)
    LOGGER(__name__).info(f"Output directory {output_dir} ready.")
