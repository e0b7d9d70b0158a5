import glob
from os.path import dirname, isfile, join, relpath, splitext


def __list_all_modules():
    work_dir = dirname(__file__)
    mod_paths = glob.glob(join(work_dir, "*", "*.py"))

    return [
        "." + splitext(relpath(f, work_dir))[0].replace("\\", "/").replace("/", ".")
        for f in mod_paths
        if isfile(f) and not f.endswith("__init__.py")
    ]


# one command per module, registered on import
ALL_MODULES = sorted(__list_all_modules())
__all__ = ALL_MODULES + ["ALL_MODULES"]
