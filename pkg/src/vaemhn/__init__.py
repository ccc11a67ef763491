"""VAE + modern Hopfield network continual learner for Split-MNIST."""

from .hopfield import ModernHopfield
from .judge import MLPJudge
from .replay import ContinualVAE
from .vae import VAE

__all__ = ["VAE", "ModernHopfield", "ContinualVAE", "MLPJudge"]
__version__ = "0.1.0"
