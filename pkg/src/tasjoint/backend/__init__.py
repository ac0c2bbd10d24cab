from .ctc import InfeasibleAlignmentError, ctc_forward_backward, ctc_loss, greedy_ctc_decode, min_frames
from .features import LogMel, logmel, mel_band_edges, mel_filterbank
from .model import AsrConfig, AsrModel, Vocabulary, asr_loss
