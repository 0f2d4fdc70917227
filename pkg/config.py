from dotenv import load_dotenv
import logging
import os

# Load environment variables from .env file
load_dotenv()

TOOL_VERSION = "1.0.0"

# Run-record store
DATABASE_URL = os.getenv("QNG_DATABASE_URL", "sqlite:///qng_runs.db")
RECORD_RUNS = os.getenv("QNG_RECORD_RUNS", "true").lower() == "true"

# Worker cap for simulation, sweeps and partitioned counting
QNG_THREADS = max(1, int(os.getenv("QNG_THREADS", str(os.cpu_count() or 1))))

# HTTP service
HOST = os.getenv("HOST", "127.0.0.1")
PORT = int(os.getenv("PORT", "8003"))

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "info")
LOG_FILE = os.getenv("LOG_FILE")

# Photon-number truncation
TAIL_MASS = 1e-12
N_MAX_CAP = int(os.getenv("QNG_N_MAX_CAP", "64"))
NORMALIZATION_TOLERANCE = 1e-9

# Relative tolerance applied to strict witness inequalities
BORDER_RTOL = 1e-12

# Depth scan
SCAN_FLOOR_DB = 60.0
SCAN_STEP_DB = 0.1
BISECTION_TOL_DB = 1e-3

# Simulation defaults
DEFAULT_JITTER_S = 0.5e-9
DEFAULT_SEGMENT_PULSES = 1_000_000
DEFAULT_SEGMENT_SECONDS = 0.1
DEFAULT_REPETITION_RATE_HZ = 1e7


def setup_logging(level: str = None, log_file: str = None):
    """Configure root logging the same way for the CLI and the HTTP service."""
    level = (level or LOG_LEVEL).lower()
    handlers = [logging.StreamHandler()]
    log_file = log_file or LOG_FILE
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if level == "debug" else logging.WARNING if level == "warning" else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )
