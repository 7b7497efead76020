"""Phase alignment of dry and processed audio with trainable all-pass cascades."""

from .signals import Signal, SequenceBatch, frame, generate_log_sweep, \
    generate_multitone, generate_noise_bursts, generate_pluck, read_wav, \
    write_wav
from .filters import (APFParams, BiquadAPF, BiquadCoeffs, Cascade,
                      DEFAULT_ORDER_SPEC, FirstOrderAPF, RCFilter, SectionSpec,
                      WarpedBiquadAPF, WarpedFirstOrderAPF,
                      compute_biquad_coeffs, frequency_response,
                      impulse_response, random_cascade)
from .autodiff import Tape
from .nn import (BiasNet, ConnectedModel, NaiveModel, ParamSpec,
                 SequentialModel, build_model, load_checkpoint,
                 save_checkpoint)
from .loss import (STFTConfig, default_resolutions, interference_stft_loss,
                   mse_time_loss, mstft_loss, mstft_report, spectrogram)
from .train import (Adam, CoefficientBundle, TrainConfig, TrainResult, apply,
                    cascade_from_bundle, export_bundle, plateau_check)
from .train import train as train_model
from .metrics import MetricsReport, esr, evaluate, mae, mse

__version__ = "0.1.0"
