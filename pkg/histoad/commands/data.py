import logging

import click

from histoad.commands.common import collect_values, config_option, echo_config, load_with, set_option
from histoad.schemas.run_schemas import CorpusConfigSchema
from histoad.services.batch_processor import batch_processor
from histoad.services.synth_service import SynthService


@click.command("gen")
@config_option
@set_option
@click.option("--out", "out_dir", default="corpus", show_default=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int)
@click.option("--n-classes", type=int)
@click.option("--tiles-per-class", type=int)
@click.option("--target-tiles", type=int)
@click.option("--test-tiles", type=int)
@click.option("--tile-side", type=int)
@click.option("--coverage", type=float)
@click.option("--overwrite", is_flag=True, help="Replace an existing corpus in --out.")
@click.option("--workers", type=int, help="Rendering threads.")
def gen(config_path, assignments, out_dir, overwrite, workers, **flags):
    """Generate the synthetic tile corpus and its manifest."""
    values = collect_values(config_path, assignments, flags)
    config = load_with(CorpusConfigSchema(), values)
    if workers:
        batch_processor.configure(workers)
    manifest = SynthService.gen_corpus(config, out_dir, overwrite=overwrite)
    echo_config(out_dir, CorpusConfigSchema().dump(config))
    counts = manifest.groupby("split").size().to_dict()
    logging.info(f"Corpus written to {out_dir}: {counts}")
