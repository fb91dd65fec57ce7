from .scenario import Scenario14, Scenario13, ScenarioChsh, exact_prediction
from .version import __version__

__all__ = ["Scenario14", "Scenario13", "ScenarioChsh", "exact_prediction"]
__version__ = __version__
