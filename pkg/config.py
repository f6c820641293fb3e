"""
Configuration file for the functional integration experiments.
Contains all configurable parameters for the library, the CLI and the API.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Reproducibility
DEFAULT_SEED = int(os.getenv("GATEAUX_SEED", 271828))  # Root seed when no flag or config file sets one

# Quadrature orders
LEGENDRE_ORDER = int(os.getenv("LEGENDRE_ORDER", 64))  # Gauss-Legendre nodes for section means
HERMITE_ORDER = int(os.getenv("HERMITE_ORDER", 40))  # Gauss-Hermite nodes for Gaussian limits
ALPHA_QUADRATURE_ORDER = int(os.getenv("ALPHA_QUADRATURE_ORDER", 64))  # Gauss-Legendre nodes on [0,1] for alpha integrals
QUADRATURE_BUDGET = int(float(os.getenv("QUADRATURE_BUDGET", 2e7)))  # Max tensor-product nodes before asking for Monte Carlo
THETA_CUTOFF = float(os.getenv("THETA_CUTOFF", 1e-20))  # cos^n(theta) below this is treated as zero
FIELD_QUADRATURE_ORDER = int(os.getenv("FIELD_QUADRATURE_ORDER", 16))  # Per-cell nodes for the field integral when n <= 4
CELL_QUADRATURE_ORDER = int(os.getenv("CELL_QUADRATURE_ORDER", 8))  # Gauss-Legendre nodes per cell for alpha and t dependence
KERNEL_EVALUATION_BUDGET = int(float(os.getenv("KERNEL_EVALUATION_BUDGET", 2e8)))  # Max kernel calls when integrating a Volterra kernel over cells

# Monte Carlo
MC_CHUNK_SIZE = int(os.getenv("MC_CHUNK_SIZE", 10000))  # Replications per derived sub-stream
MC_MAX_CHUNK_ELEMENTS = int(float(os.getenv("MC_MAX_CHUNK_ELEMENTS", 2e6)))  # Caps rows * n in one chunk
MC_WORKERS = int(os.getenv("MC_WORKERS", 1))  # Threads used to run chunks
SHOW_PROGRESS = os.getenv("SHOW_PROGRESS", "False").lower() == "true"  # tqdm bars over chunks

# Brownian first passage
PASSAGE_DT = float(os.getenv("PASSAGE_DT", 1e-3))
PASSAGE_HORIZON = float(os.getenv("PASSAGE_HORIZON", 5.0))  # Paths still inside at this time are censored
PASSAGE_ENGINE = os.getenv("PASSAGE_ENGINE", "radial")  # "radial" or "full"
PASSAGE_CHUNK_SIZE = int(os.getenv("PASSAGE_CHUNK_SIZE", 10000))

# Natural density
DENSITY_BLOCK_SIZE = int(float(os.getenv("DENSITY_BLOCK_SIZE", 1e6)))  # Integers per streamed block
DENSITY_CHECKPOINTS = int(os.getenv("DENSITY_CHECKPOINTS", 10))

# Green decomposition
GREEN_POLAR_ORDER = int(os.getenv("GREEN_POLAR_ORDER", 32))
GREEN_AZIMUTH_ORDER = int(os.getenv("GREEN_AZIMUTH_ORDER", 64))
GREEN_VOLUME_SHELLS = int(os.getenv("GREEN_VOLUME_SHELLS", 32))
NEAR_BOUNDARY_FRACTION = float(os.getenv("NEAR_BOUNDARY_FRACTION", 0.9))  # |P| beyond this fraction of a is flagged

# Reports
REPORT_DIR = "reports"  # Default directory for report files

# API configuration
API_HOST = os.getenv("API_HOST", "0.0.0.0")  # Host to bind the API server to
API_PORT = int(os.getenv("API_PORT", 8080))  # Port to bind the API server to
API_DEBUG = os.getenv("API_DEBUG", "False").lower() == "true"  # Whether to run the API server in debug mode

# Logging configuration
LOG_DIR = "logs"  # Directory to store log files
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")  # Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
