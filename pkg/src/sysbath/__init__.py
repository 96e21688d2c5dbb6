"""Dense simulation of a weakly coupled system-ancilla protocol for thermal and
ground state preparation: channels, effective generators and mixing diagnostics."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .linalg import Superoperator  # noqa: E402
from .models import HamiltonianModel, model_from_spec  # noqa: E402
from .channel import ChannelParams, FilterSpec, FrequencyDistribution, channel_superoperator, make_params  # noqa: E402
from .lindblad import GeneratorBundle, effective_generator  # noqa: E402
from .analysis import fixed_point, mixing_time_empirical  # noqa: E402
