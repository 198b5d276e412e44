"""Loss-landscape characterization for small XOR networks.

Locates minima and transition states of the regularized cross-entropy
loss of tiny tanh networks trained on the four XOR pairs, builds the
transition network, and renders disconnectivity graphs and
input-sensitivity maps.
"""

__version__ = "0.1.0"

from .model import Layout, LossConfig, XorLoss  # noqa: F401
from .optimize import MinimizeSettings, MinimizeResult, minimize, minimize_projected  # noqa: F401
from .database import LandscapeDB, StationaryPoint, CandidatePoint  # noqa: F401
from .explore import BasinHoppingSettings, basin_hop, exhaustive_sweep  # noqa: F401
from .saddles import BandSettings, EFSettings, PathResult, connect_all  # noqa: F401
from .graphs import DisconnectivityTree, build_tree  # noqa: F401
