"""
CLI Package
Subcommands: dewarp, mrm, synth, eval, losses.
"""
