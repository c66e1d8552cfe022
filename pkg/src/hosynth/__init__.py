"""Hand-object-viewpoint sampling space, grasp synthesis and loss-feedback loop."""
from ._accel import backend_name
from .ccv_space import (CCVSpace, FeedbackRecord, TripletIndex, WeightMap, apply_epoch_feedback,
                        build_space, load_weights, sample_triplets, save_weights, weight_update)
from .errors import HosynthError
from .mesh import ObjectModel, box, cylinder, icosphere, load_obj, save_obj

__version__ = "0.1.0"
