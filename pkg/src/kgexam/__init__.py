"""kgexam: adaptive knowledge-graph examination of language models."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    BetaParams,
    Edge,
    Entity,
    ParameterizedKG,
    PredicateDef,
    Signal,
    posterior_mean,
)
from .questions import AnswerSets, Question, build_answer_sets  # noqa: F401
from .exam import RunConfig, RunResult, run_evaluation  # noqa: F401
