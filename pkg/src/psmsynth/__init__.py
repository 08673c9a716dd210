"""psmsynth: a hybrid synthesis toolchain for periodic state machines.

Pipeline: model/validate/simulate timed state machines (`model`, `dsl`),
represent and transform their multi-cycle computations as dataflow graphs
(`dfg`), schedule them under latency constraints (`fds`), estimate cost and
ingest measured alternatives (`cost`), synthesize and interpret cycle-accurate
FSMs (`fsm`), and explore system configurations under timing constraints
(`dse`).  `cli` binds the stages into a command-line tool.
"""

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "cost",
    "dfg",
    "dse",
    "dsl",
    "expr",
    "fds",
    "fsm",
    "kernels",
    "model",
    "timeunits",
]
