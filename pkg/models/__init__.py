from .geometry import Domain, DomainKind, DistanceKind, ManifoldPoint
from .training_models import Regularizer, RegularizerKind, ParticleEnsemble, DataSet, TrainConfig

__all__ = [
    'Domain',
    'DomainKind',
    'DistanceKind',
    'ManifoldPoint',
    'Regularizer',
    'RegularizerKind',
    'ParticleEnsemble',
    'DataSet',
    'TrainConfig',
]
