from os import getenv

from dotenv import load_dotenv

load_dotenv()


def time_to_seconds(time):
    stringt = str(time)
    if ":" not in stringt:
        return float(stringt)
    return sum(int(x) * 60**i for i, x in enumerate(reversed(stringt.split(":"))))


# One seed feeds the mix-zone shuffle, the linkage attacker and the generator.
SEED = int(getenv("SEED", 0))

## Smoothing
# preserve_count, fixed_count or fixed_interval
OUTPUT_MODE = getenv("OUTPUT_MODE", "preserve_count")
OUTPUT_COUNT = int(getenv("OUTPUT_COUNT", 100))
OUTPUT_INTERVAL_S = float(getenv("OUTPUT_INTERVAL_S", 60))
# drop or error
ZERO_LENGTH_POLICY = getenv("ZERO_LENGTH_POLICY", "drop")

## Mix-zones
PROXIMITY_M = float(getenv("PROXIMITY_M", 100))
RADIUS_M = float(getenv("RADIUS_M", 250))
MIN_COPRESENCE_S = time_to_seconds(getenv("MIN_COPRESENCE_S", 0))
SAMPLE_STEP_S = time_to_seconds(getenv("SAMPLE_STEP_S", 10))

## Attacks
D_MAX_M = float(getenv("D_MAX_M", 200))
# Accepts plain seconds or "15:00"
T_MIN_S = time_to_seconds(getenv("T_MIN_S", "15:00"))
MATCH_RADIUS_M = float(getenv("MATCH_RADIUS_M", 250))

## Pipeline
OUTPUT_DIR = getenv("OUTPUT_DIR", "output")
LOG_FILE = getenv("LOG_FILE", "log.txt")

# Worker threads for per-trace stages
WORKERS = int(getenv("WORKERS", 4))

# Files written by the running command, removed again if it fails.
autoclean = []


if OUTPUT_MODE not in ("preserve_count", "fixed_count", "fixed_interval"):
    raise SystemExit(
        "[ERROR] - OUTPUT_MODE must be one of preserve_count, fixed_count, fixed_interval."
    )

if ZERO_LENGTH_POLICY not in ("drop", "error"):
    raise SystemExit("[ERROR] - ZERO_LENGTH_POLICY must be either drop or error.")
