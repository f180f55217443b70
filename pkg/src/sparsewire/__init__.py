"""sparsewire: sparse spiking-network simulation with runtime rewiring."""

from .bitfield import Bitfield
from .connectivity import (RaggedMatrix, SynVarMatrix, TransposeMap,
                           add_synapse, densify, init_pairwise_bernoulli,
                           propagate_spikes, remap_transpose, remove_synapse)
from .deep_r import DeepR
from .geometry import GridGeometry
from .neurons import (AlifLayer, AlifParams, LifCondLayer, LifCondParams,
                      PoissonParams, PoissonSource, ReadoutLayer)
from .plasticity import (Adam, DeltaRuleAccumulator, EpropSynapses, StdpParams,
                         StdpSynapses, cross_entropy, learning_signal, softmax)
from .rng import CounterRng
from .topomap import (RewiringParams, RewiringRule, TopomapModel,
                      TopomapRecorder, elimination_probability,
                      expected_initial_degree, formation_probability)
from .updates import Model, PhaseTimers, RowContext, RuleDescriptor

__version__ = "0.1.0"
