"""legolab: a laboratory for the LEGO chain-resolution task.

Generates and solves chain sentences, trains small transformer encoders
(vanilla, weight-tied, structured-attention and conv-hybrid variants) on
them, supports probing, shortcut detection, attention mimicking, and
analytic Flops/parameter accounting.
"""

from .attention_maps import (AttnMap, build_association, build_broadcast,
                             build_manipulation_target,
                             build_mimic_association_target, row_normalize)
from .autodiff import Tensor, backward, set_mode
from .chains import (Chain, ChainError, Clause, ParseError, parse_sentence,
                     render_sentence, resolve_chain, sample_chain,
                     shortcut_last_parity)
from .data import (TokenSequence, Vocab, encode_dataset, generate_dataset,
                   load_dataset, tokenize)
from .groups import D3, Z2, GroupSpec, LegoError, apply_group, get_group
from .harness import (MetricsTable, OnsetReport, TrainConfig, evaluate, probe,
                      shortcut_report, train)
from .mimic import MimicPlan, mimic_eval, mimic_loss, mimic_train
from .model import (ForwardTrace, ModelConfig, classify, conv_hybrid_attention,
                    encoder_forward, flops_breakdown, flops_estimate,
                    init_params, lego_attention_forward, load_checkpoint,
                    mha_forward, param_breakdown, param_count, save_checkpoint)

__version__ = "0.1.0"
