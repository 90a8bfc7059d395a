"""Command line interface and checkpoint serialisation."""

from .checkpoint import (MAGIC, VERSION, CheckpointError, checkpoint_size, decode_checkpoint,
                         encode_checkpoint, load_checkpoint, save_checkpoint)
from .snapshot import restore, snapshot

__all__ = ["MAGIC", "VERSION", "CheckpointError", "checkpoint_size", "decode_checkpoint",
           "encode_checkpoint", "load_checkpoint", "save_checkpoint", "restore", "snapshot", "main"]


def main(argv=None) -> int:
    from .main import main as _main
    return _main(argv)
