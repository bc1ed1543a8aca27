"""
Services Module
Business logic layer for scene I/O, training, inference, evaluation and diagnostics
"""

from mvsmamba.services.image_service import ImageService
from mvsmamba.services.camera_service import CameraService
from mvsmamba.services.checkpoint_service import CheckpointService
from mvsmamba.services.scene_service import SceneService
from mvsmamba.services.training_service import TrainingService
from mvsmamba.services.inference_service import InferenceService
from mvsmamba.services.evaluation_service import EvaluationService
from mvsmamba.services.debug_service import DebugService
from mvsmamba.services.selfcheck_service import SelfcheckService

__all__ = [
    'ImageService',
    'CameraService',
    'CheckpointService',
    'SceneService',
    'TrainingService',
    'InferenceService',
    'EvaluationService',
    'DebugService',
    'SelfcheckService'
]
