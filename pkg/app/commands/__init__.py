# one module per sub-command, each exposing register(subparsers)
from . import analyze, casestudy, optimize, sweep

COMMANDS = (analyze, optimize, sweep, casestudy)
