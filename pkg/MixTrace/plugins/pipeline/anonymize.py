import asyncio

from MixTrace import app
from MixTrace.core.dir import dirr
from MixTrace.core.io import read_dataset, write_dataset, write_json, write_jsonl
from MixTrace.core.trace import ValidationReport
from MixTrace.logging import LOGGER
from MixTrace.mechanisms.mixzone import apply_mix_zones, detect_meetings, replay_ownership, zone_audit
from MixTrace.mechanisms.smoothing import assemble_smoothed, smooth_constant_speed
from MixTrace.utils.decorators.language import language
from MixTrace.utils.exceptions import ConfigError
from MixTrace.utils.metrics import utility_report
from strings.helpers import HELP_ANONYMIZE


async def smooth_all(client, dataset, params):
    """Smooth every trace on the worker pool, reassembled in label order."""
    traces = list(dataset)
    results = await asyncio.gather(*(client.run_sync(smooth_constant_speed, tr, params) for tr in traces))
    smoothed = [out for out in results if out is not None]
    dropped = [tr.label for tr, out in zip(traces, results) if out is None]
    return assemble_smoothed(dataset, smoothed, dropped, params)


@app.on_command("anonymize", help=HELP_ANONYMIZE)
@language
async def anonymize_cmd(client, cfg, _):
    if not cfg.input:
        raise ConfigError(_["cfg_1"])
    dirr(cfg.output_dir)
    log = LOGGER(__name__)

    report = ValidationReport()
    original = await client.run_sync(read_dataset, cfg.input, report)
    write_dataset(original, cfg.path("validated.csv"))
    log.info(_["anon_1"].format(len(original), original.n_points, report.summary()))

    if cfg.smooth:
        smoothed, dropped = await smooth_all(client, original, cfg.smoothing)
        log.info(_["anon_2"].format(len(smoothed), len(dropped)))
    else:
        smoothed = original.with_meta(stage="smoothed")
        log.info(_["anon_3"])
    write_dataset(smoothed, cfg.path("smoothed.csv"))

    if cfg.swap:
        zones = await client.run_sync(detect_meetings, smoothed, cfg.mixzone)
        anonymized, events = await client.run_sync(apply_mix_zones, smoothed, zones, cfg.mixzone)
        log.info(
            _["anon_4"].format(
                len(zones), sum(e.swapped for e in events), sum(e.points_suppressed for e in events)
            )
        )
    else:
        zones, events = [], []
        anonymized = smoothed.with_meta(stage="swapped")
        log.info(_["anon_5"])
    write_dataset(anonymized, cfg.path("anonymized.csv"))
    await write_jsonl(cfg.path("audit.jsonl"), zone_audit(zones, events))

    ownership = replay_ownership(smoothed.labels, zones, events)
    utility = await client.run_sync(utility_report, original, anonymized, ownership, smoothed)
    await write_json(cfg.path("utility.json"), utility.to_dict())
    log.info(_["anon_6"].format(utility.spatial_max_m, utility.temporal_mean_abs_s, utility.suppression_rate))
