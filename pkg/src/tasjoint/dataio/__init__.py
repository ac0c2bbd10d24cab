from .wav import (ChannelCountError, CorruptHeaderError, MixtureExample, UnsupportedEncodingError,
                  WavError, Waveform, quantize, read_wav, write_wav)
from .mixing import measured_snr_db, mix_pair, snr_scale
from .corpus import (CorpusConfig, CorpusConfigError, SpeakerProfile, clean_utterance,
                     generate_toneword_corpus, make_mixture, render_utterance, vocabulary)
from .manifest import check_manifest, load_mixtures, load_utterances, read_manifest, read_vocab
