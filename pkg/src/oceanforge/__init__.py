"""Oceanforge: AIS-labelled underwater audio corpus + LoRA-tuned audio-text dual encoder."""

__version__ = "0.1.0"
