import os

from MixTrace import app
from MixTrace.core.io import read_audit, read_stage, read_truth_pois, write_json
from MixTrace.logging import LOGGER
from MixTrace.utils.decorators.language import language
from MixTrace.utils.metrics import privacy_report
from strings.helpers import HELP_ATTACK


def load_truth(cfg):
    """Generator ground truth when one is around, else None."""
    if cfg.truth:
        return read_truth_pois(cfg.truth)
    default = cfg.truth_path()
    return read_truth_pois(default) if os.path.exists(default) else None


async def run_privacy(client, cfg):
    original = read_stage(cfg.path("validated.csv"), "a_original")
    anonymized = read_stage(cfg.path("anonymized.csv"), "c_swapped")
    zones, events = read_audit(cfg.path("audit.jsonl"))
    privacy = await client.run_sync(
        privacy_report,
        original,
        anonymized,
        cfg.attack,
        zones,
        events,
        load_truth(cfg),
        cfg.seed,
        cfg.assignment,
    )
    return privacy, len(zones)


@app.on_command("attack", help=HELP_ATTACK)
@language
async def attack_cmd(client, cfg, _):
    privacy, n_zones = await run_privacy(client, cfg)
    await write_json(cfg.path("privacy.json"), privacy.to_dict())
    LOGGER(__name__).info(
        _["attack_1"].format(privacy.poi_recall_before, privacy.poi_recall_after, privacy.n_truth_pois)
    )
    LOGGER(__name__).info(_["attack_2"].format(privacy.linkage_accuracy, n_zones))
