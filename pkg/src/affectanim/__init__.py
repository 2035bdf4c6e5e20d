"""Emotion-dependent facial shape animation from affective speech."""

from affectanim.emotion import EMOTIONS, UtteranceDecision, decide, utterance_histogram

__version__ = "0.1.0"

__all__ = ["EMOTIONS", "UtteranceDecision", "decide", "utterance_histogram", "__version__"]
