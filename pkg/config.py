# Description: Project constants
import os

PARENT_DIR = os.path.dirname(os.path.abspath(__file__)) + '/'  # directory of this repository

LOG_DIR = f'{PARENT_DIR}db/log/'  # default log directory (the CLI redirects it to --out)

DEFAULT_SEED = 0  # seed used when neither the config nor --seed sets one

# Checkpoint
CHECKPOINT_MAGIC = b'RXCK'  # first four bytes of every checkpoint
CHECKPOINT_VERSION = 1  # bumped on any layout change

# Degradations
DEGRADATION_KINDS = ('noise', 'rain', 'haze', 'blur', 'lowlight', 'snow')  # every kind a label may carry
CANONICAL_SIGMAS = (15, 25, 50)  # Gaussian noise levels on the 0-255 scale
