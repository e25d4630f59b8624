"""Desk-scale multilingual CTC phone recognition toolkit.

Universal-IPA-phone-set BLSTM acoustic models trained with the CTC loss,
language-adaptive training via per-language hidden-unit amplitudes (LHUC),
sequence-level feedforward/recurrent dropout, and cross-lingual adaptation
by replacing or extending the output layer.
"""

from .adaptation import (
    AdaptationPlan,
    AdaptedModel,
    Strategy,
    apply_freeze,
    extend_output_layer,
    replace_output_layer,
)
from .corpus import (
    Dataset,
    PhonePrototypeBank,
    SyntheticLanguageSpec,
    Utterance,
    build_prototype_bank,
    generate_language,
    load_dataset,
    normalize_per_speaker,
    save_dataset,
    split_by_speaker,
    subset_utterances,
)
from .ctc import (
    CtcInstance,
    CtcResult,
    collapse_path,
    ctc_brute_force,
    ctc_grad,
    ctc_log_likelihood,
)
from .decode import ErrorCounts, edit_distance, greedy_decode, label_error_rate
from .network import (
    DropoutMode,
    DropoutPlan,
    Model,
    ModelConfig,
    init_model,
    load_checkpoint,
    network_backward,
    network_forward,
    sample_dropout_plan,
    sample_utterance_masks,
    save_checkpoint,
)
from .numerics import Rng, log_sum_exp, sigmoid, softmax
from .phoneset import (
    BLANK,
    CoverageReport,
    LanguagePhoneMap,
    UniversalPhoneSet,
    coverage,
    encode_labels,
    extend,
    load_phone_set,
    merge_phone_sets,
    save_phone_set,
)
from .training import (
    EpochReport,
    TrainConfig,
    TrainState,
    evaluate_mean_loss,
    run_training,
    sgd_momentum_step,
    train_minibatch,
)

__version__ = "0.1.0"
