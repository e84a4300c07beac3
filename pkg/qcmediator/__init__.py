"""
qcmediator - can a classical mediator entangle two quantum systems?

Koopman, mean-field and configuration-ensemble models of hybrid
quantum-classical dynamics, with the checks that decide the question for
each of them.
"""

from qcmediator.config import DEFAULT_CONFIG, QCMediatorConfig
from qcmediator.errors import QCMediatorError

__version__ = "1.0.0"

__all__ = ["DEFAULT_CONFIG", "QCMediatorConfig", "QCMediatorError", "__version__"]
