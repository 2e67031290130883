#! /usr/bin/env python3
import sys

import rich_click as click

import gemmesh
from gemmesh.cli.evaluate import evaluate
from gemmesh.cli.synth import synth
from gemmesh.cli.train import train
from gemmesh.cli.verify import verify

ADDITIONAL_OPTIONS = {
    "name": "Additional Options",
    "options": ["--jobs", "--silent", "--verbose", "--help"],
}

click.rich_click.USE_RICH_MARKUP = True
click.rich_click.OPTION_GROUPS = {
    "gemmesh synth": [
        {
            "name": "Required Options",
            "options": ["--kind", "--out"],
        },
        {
            "name": "Generator Options",
            "options": [
                "--count",
                "--seed",
                "--flow-range",
                "--segments",
                "--spacing",
                "--time-steps",
                "--vtk",
            ],
        },
        ADDITIONAL_OPTIONS,
    ],
    "gemmesh train": [
        {
            "name": "Required Options",
            "options": ["--config", "--data", "--out"],
        },
        {
            "name": "Training Options",
            "options": ["--seed", "--epochs", "--augment-rotations", "--train-size"],
        },
        ADDITIONAL_OPTIONS,
    ],
    "gemmesh eval": [
        {
            "name": "Required Options",
            "options": ["--checkpoint", "--data", "--out"],
        },
        {
            "name": "Evaluation Options",
            "options": ["--rotate", "--split", "--seed", "--vtk"],
        },
        ADDITIONAL_OPTIONS,
    ],
    "gemmesh verify": [
        {
            "name": "Required Options",
            "options": ["--checkpoint", "--mesh", "--suite"],
        },
        {
            "name": "Additional Options",
            "options": ["--seed", "--out", "--silent", "--verbose", "--help"],
        },
    ],
}


@click.group()
@click.version_option(gemmesh.__version__, "--version", "-V")
@click.help_option("--help", "-h")
def cli():
    """Gauge equivariant mesh CNNs for hemodynamics on synthetic arteries."""


cli.add_command(synth)
cli.add_command(train)
cli.add_command(evaluate, name="eval")
cli.add_command(verify)


def main():
    if len(sys.argv) == 1:
        cli(["--help"])
    else:
        cli()


if __name__ == "__main__":
    main()
