from .demod import CONSTELLATIONS, Classifier, DemodRequest, DemodResponse, demodulate, nearest_point
from .scheduler import SchedulerRequest, SchedulerResponse, schedule
from .service import SUT_VERSION, SutService, serve

__all__ = [
    "CONSTELLATIONS",
    "Classifier",
    "DemodRequest",
    "DemodResponse",
    "SUT_VERSION",
    "SchedulerRequest",
    "SchedulerResponse",
    "SutService",
    "demodulate",
    "nearest_point",
    "schedule",
    "serve",
]
