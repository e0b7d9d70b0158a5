from MixTrace import app
from MixTrace.core.dir import dirr
from MixTrace.core.io import write_dataset
from MixTrace.logging import LOGGER
from MixTrace.utils.decorators.language import language
from MixTrace.utils.synthgen import generate, write_truth
from strings.helpers import HELP_GENERATE


@app.on_command("generate", help=HELP_GENERATE)
@language
async def generate_cmd(client, cfg, _):
    dirr(cfg.output_dir)
    dataset, truth, meetings = await client.run_sync(generate, cfg.synth)
    target = cfg.input or cfg.path("generated.csv")
    write_dataset(dataset, target)
    LOGGER(__name__).info(_["gen_1"].format(len(dataset), dataset.n_points, target))
    write_truth(truth, meetings, cfg.output_dir)
    LOGGER(__name__).info(_["gen_2"].format(len(truth), len(meetings), cfg.output_dir))
