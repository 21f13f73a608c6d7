import logging
import sys

import torch

from app.cli import main
from app.core.config import get_settings

settings = get_settings()

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

# Intra-op threads for torch
torch.set_num_threads(settings.torch_threads)


if __name__ == "__main__":
    sys.exit(main())
