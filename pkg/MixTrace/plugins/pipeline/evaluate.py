import os

from MixTrace import app
from MixTrace.core.io import read_audit, read_stage, write_json
from MixTrace.logging import LOGGER
from MixTrace.mechanisms.mixzone import replay_ownership
from MixTrace.plugins.pipeline.attack import run_privacy
from MixTrace.utils.decorators.language import language
from MixTrace.utils.metrics import utility_report
from strings.helpers import HELP_EVALUATE


@app.on_command("evaluate", help=HELP_EVALUATE)
@language
async def evaluate_cmd(client, cfg, _):
    original = read_stage(cfg.path("validated.csv"), "a_original")
    anonymized = read_stage(cfg.path("anonymized.csv"), "c_swapped")
    smoothed_path = cfg.path("smoothed.csv")
    reference = read_stage(smoothed_path, "b_smoothed") if os.path.exists(smoothed_path) else original
    zones, events = read_audit(cfg.path("audit.jsonl"))

    ownership = replay_ownership(reference.labels, zones, events)
    utility = await client.run_sync(utility_report, original, anonymized, ownership, reference)
    privacy, _n = await run_privacy(client, cfg)

    path = await write_json(
        cfg.path("evaluation.json"),
        {"utility": utility.to_dict(), "privacy": privacy.to_dict(), "n_zones": len(zones)},
    )
    LOGGER(__name__).info(_["eval_1"].format(path))
