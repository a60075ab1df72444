import logging
import sys
from typing import List, Optional

import click

from histoad.config import LOG_LEVEL
from histoad.errors import HistoadError
from histoad.services.batch_processor import batch_processor


def create_cli() -> click.Group:
    @click.group()
    @click.option("--log-level", default=LOG_LEVEL, show_default=True, help="Root logger level.")
    def cli(log_level):
        """Tile anomaly detection: synthetic data, encoder training, one-class scoring, evaluation."""
        logging.basicConfig(
            level=getattr(logging, log_level.upper(), logging.INFO),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            force=True,
        )

    from histoad.commands.data import gen

    cli.add_command(gen)

    from histoad.commands.training import train_encoder, train_ocsvm

    cli.add_command(train_encoder)
    cli.add_command(train_ocsvm)

    from histoad.commands.scoring import score

    cli.add_command(score)

    from histoad.commands.evaluation import ablate, evaluate

    cli.add_command(evaluate)
    cli.add_command(ablate)
    return cli


cli = create_cli()


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; exit codes are 0 ok, 1 usage or config, 2 data, 3 convergence"""
    try:
        result = cli.main(args=argv, prog_name="histoad", standalone_mode=False)
    except click.exceptions.Abort:
        logging.error("Aborted")
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except HistoadError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    logging.debug(f"Batch work: {batch_processor.get_batch_status()}")
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
