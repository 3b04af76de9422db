"""quantcap: joint optimization of the analog combiner, ADC thresholds, and
input constellation of a low-resolution MIMO receiver, with capacity-based
rewards and reference baselines."""

from .capacity import (CapacityResult, InfeasiblePowerError, InputDistribution,
                       ba_capacity, ba_capacity_power_constrained,
                       binary_entropy, mutual_information, onebit_awgn_oracle)
from .channel import (ChannelEnv, DegenerateCombinerWarning, QuantizerOutput,
                      ReceiverConfig, TransitionMatrix, adc_quantize,
                      apply_csi_noise, from_json_doc, max_alphabet_size,
                      quantize_received, snr_to_power, to_json_doc,
                      transition_matrix)
from .policy import (ActionDelta, PolicyBank, TrainConfig, Trajectory,
                     band_index, compute_reward, infer, init_environment,
                     sample_action, train, transition)

__version__ = "0.1.0"
