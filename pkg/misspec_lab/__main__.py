from misspec_lab.cli import cli

cli()
