"""Fast-adapting terrain classification and navigation, desk scale.

Subsystems: tensor_ops (layer math + SGD), network (feature extractor),
augment (training-set augmentation), patches (patch scanning + fast head),
ground (plane fitting), costmap (fusion grid), planner (grid search),
service (HTTP API), cli (command line).
"""

__version__ = "0.1.0"
