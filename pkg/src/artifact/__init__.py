"""Cross-lingual dependency parsing by projecting arc and label
distributions through word alignments."""

from .alignment import (RawAlignment, StochasticAlignment, argmax_align,
                        build_projection_matrices, filter_one_to_one)
from .biaffine import EncoderConfig, ParserModel, load_model, save_model
from .decoding import brute_force_decode, mst_decode, parse_sentences
from .evaluation import EvalResult, evaluate, report
from .projection import (SoftTarget, hard_project, project_arcs, project_arcs_normalized,
                         project_discrete_tree, project_distributions, project_labels)
from .synthdata import SynthConfig, generate
from .training import TrainConfig, gradient_check, train
from .treebank import LabelSet, Sentence, Token, parse_conllu, write_conllu

__version__ = "0.1.0"
