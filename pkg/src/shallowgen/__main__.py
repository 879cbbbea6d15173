from shallowgen.cli import run

run()
