from .cache_service import CacheService
from .counter_service import CounterService
from .explab_service import ExpLabService
from .geometry_service import GeometryService
from .sums_service import SumsService

__all__ = ['CacheService', 'CounterService', 'ExpLabService', 'GeometryService', 'SumsService']
