import json
import logging
import os
import warnings
from pathlib import Path
from typing import Optional

from importlib_metadata import PackageNotFoundError, distribution, version
from tqdm import TqdmExperimentalWarning

DISTRIBUTION_NAME = "multiscale-averaging"

DEFAULT_RUNGS_PER_OCTAVE = 8
DEFAULT_BISECTIONS = 6
MAX_CANTOR_DEPTH = 12
DEFAULT_REFINEMENT_BAND = 0.30
DEFAULT_SEED = 0
# Upper bound on grid cells (space x time) a single suite field may allocate
MAX_SUITE_CELLS = 2 ** 24

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3

THREADS_ENV = "MSA_THREADS"


class MsaError(Exception):
    """Base class for all errors raised by msa"""


class FormatError(MsaError, ValueError):
    pass


class TruncationError(FormatError):
    pass


class DomainError(MsaError, ValueError):
    pass


class ParameterError(MsaError, ValueError):
    pass


class ConfigurationError(MsaError, ValueError):
    pass


class ResourceError(MsaError, RuntimeError):
    pass


class UsageError(MsaError, ValueError):
    pass


class TqdmHandler(logging.StreamHandler):
    """https://stackoverflow.com/a/38895482/3549270"""

    def __init__(self):
        logging.StreamHandler.__init__(self)

    def emit(self, record):
        # We need the native tqdm here
        from tqdm import tqdm

        msg = self.format(record)
        tqdm.write(msg)


def setup_logging(log_file: Path):
    log_file.parent.mkdir(exist_ok=True, parents=True)
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(message)s",
        handlers=[TqdmHandler(), logging.FileHandler(log_file)],
    )
    warnings.simplefilter(action="ignore", category=TqdmExperimentalWarning)


def safe_filename(file: str) -> str:
    return "".join([c if c.isalnum() or c in ["_", ".", "-"] else "_" for c in file])


def get_version() -> str:
    try:
        return version(DISTRIBUTION_NAME)
    except PackageNotFoundError:
        return "unknown"


def get_commit() -> Optional[str]:
    try:
        text = distribution(DISTRIBUTION_NAME).read_text("direct_url.json")
    except PackageNotFoundError:
        return None
    if not text:
        return None
    direct_url = json.loads(text)
    if "vcs_info" not in direct_url:
        return None
    if "commit_id" not in direct_url["vcs_info"]:
        return None
    return direct_url["vcs_info"]["commit_id"]


def thread_limit() -> Optional[int]:
    """Worker count for FFTs, from MSA_THREADS. None lets scipy decide (single thread)."""
    value = os.environ.get(THREADS_ENV)
    if value is None or value == "":
        return None
    try:
        threads = int(value)
    except ValueError:
        raise ConfigurationError(
            f"{THREADS_ENV} must be a positive integer, got {value!r}"
        ) from None
    if threads < 1:
        raise ConfigurationError(
            f"{THREADS_ENV} must be a positive integer, got {value!r}"
        )
    return threads
