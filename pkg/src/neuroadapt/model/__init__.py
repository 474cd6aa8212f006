from .compiled import (CompiledModel, ModelArrays, compile_model, drift_a, internal_dynamics,
                       jacobian_internal_wrt_eta, jacobian_output, override_conductances,
                       regressor_phi)
from .kinetics import (GatingKinetics, SynapticKinetics, bell_tau_eval, gating_rate,
                       sigmoid_eval, synaptic_gating_rate)
from .presets import list_presets, load_model_file, preset, spec_from_dict
from .spec import (IonicCurrentSpec, NetworkSpec, NeuronSpec, Parametrization, SynapseSpec,
                   as_network, gate_rates, invariant_bounds, membrane_rhs)

__all__ = [
    "CompiledModel", "ModelArrays", "compile_model", "drift_a", "internal_dynamics",
    "jacobian_internal_wrt_eta", "jacobian_output", "override_conductances", "regressor_phi", "GatingKinetics",
    "SynapticKinetics", "bell_tau_eval", "gating_rate", "sigmoid_eval", "synaptic_gating_rate",
    "list_presets", "load_model_file", "preset", "spec_from_dict", "IonicCurrentSpec",
    "NetworkSpec", "NeuronSpec", "Parametrization", "SynapseSpec", "as_network", "gate_rates",
    "invariant_bounds", "membrane_rhs",
]
