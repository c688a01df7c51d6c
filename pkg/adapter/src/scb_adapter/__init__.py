"""Reference implementation of the scb embedding-adapter contract.

Invoked as a process with a manifest CSV and an EMB1 output path; runs a
pretrained speech or text encoder (HuggingFace id or local checkpoint
directory), mean-pools per clip/transcript, and writes one vector per
manifest uid. The scb toolkit never imports this package; the file formats
are the whole interface.
"""

__version__ = "0.1.0"
