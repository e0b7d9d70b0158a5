from MixTrace import app
from MixTrace.core.io import read_stage, write_plot_stage
from MixTrace.logging import LOGGER
from MixTrace.utils.decorators.language import language
from strings.helpers import HELP_PLOTDATA

STAGES = (
    ("a_original", "validated.csv"),
    ("b_smoothed", "smoothed.csv"),
    ("c_swapped", "anonymized.csv"),
)


@app.on_command("plotdata", help=HELP_PLOTDATA)
@language
async def plotdata_cmd(client, cfg, _):
    # every stage must exist before anything is written
    stages = [(stage, read_stage(cfg.path(name), stage)) for stage, name in STAGES]
    for stage, dataset in stages:
        paths = write_plot_stage(dataset, cfg.path("plot", stage))
        LOGGER(__name__).info(_["plot_1"].format(len(paths), stage))
