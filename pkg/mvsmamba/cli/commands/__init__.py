"""
CLI Commands Module
All command entry points
"""

from mvsmamba.cli.commands.scene import gen_synthetic
from mvsmamba.cli.commands.training import train
from mvsmamba.cli.commands.inference import infer
from mvsmamba.cli.commands.evaluation import evaluate
from mvsmamba.cli.commands.selfcheck import selfcheck
from mvsmamba.cli.commands.debug import dump_scan, dump_features

COMMANDS = [gen_synthetic, train, infer, evaluate, selfcheck, dump_scan, dump_features]

__all__ = [
    'COMMANDS',
    'gen_synthetic',
    'train',
    'infer',
    'evaluate',
    'selfcheck',
    'dump_scan',
    'dump_features'
]
