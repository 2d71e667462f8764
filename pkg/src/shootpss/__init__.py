"""Periodic steady-state circuit simulation by the single shooting method."""

__version__ = "0.1.0"

from .errors import PssError  # noqa: E402
from .netlist import Circuit, parse_netlist  # noqa: E402
from .mna import solve_dc  # noqa: E402
from .transient import Method, Waveform, integrate, tran_init, tran_pss  # noqa: E402
from .sensitivity import monodromy  # noqa: E402
from .shooting import PssOptions, PssResult, refine, shoot_autonomous, shoot_driven  # noqa: E402
from .analysis import convergence_report, spectrum  # noqa: E402

__all__ = ["PssError", "Circuit", "parse_netlist", "solve_dc", "Method", "Waveform", "integrate",
           "tran_init", "tran_pss", "monodromy", "PssOptions", "PssResult", "refine",
           "shoot_autonomous", "shoot_driven", "convergence_report", "spectrum"]
