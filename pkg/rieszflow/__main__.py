from rieszflow.cli import cli

cli()
