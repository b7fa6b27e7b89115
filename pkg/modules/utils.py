import logging
import os
import datetime
from concurrent.futures import ThreadPoolExecutor

import numpy as np

RNG_ALGORITHM = "PCG64"

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level=None, log_dir=None):
    """Setup logging configuration"""
    level_name = (level or os.getenv('SYNSACC_LOG', 'INFO')).upper()
    log_level = getattr(logging, level_name, None)
    if not isinstance(log_level, int):
        log_level = logging.INFO

    handlers = [logging.StreamHandler()]

    # Log to a dated file when the directory is writable
    log_dir = log_dir or os.getenv('SYNSACC_LOG_DIR', 'logs')
    try:
        ensure_dir(log_dir)
        current_date = datetime.datetime.now().strftime("%Y-%m-%d")
        handlers.append(logging.FileHandler(os.path.join(log_dir, f"synsacc_{current_date}.log")))
    except OSError:
        pass

    logging.basicConfig(level=log_level, format=LOG_FORMAT, handlers=handlers, force=True)

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging setup complete (level {level_name})")

    return logger


def progress_enabled():
    """Progress bars are shown only when INFO messages are"""
    return logging.getLogger().isEnabledFor(logging.INFO)


def ensure_dir(path):
    """Create a directory if it doesn't exist and return it"""
    if path and not os.path.exists(path):
        os.makedirs(path)
    return path


def make_rng(seed, *keys):
    """Create the named 64-bit generator for a seed and optional stream keys"""
    entropy = [int(seed)] + [int(key) for key in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def thread_map(func, items, threads=1):
    """Map func over items, optionally on a thread pool, keeping input order"""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def format_seconds(seconds):
    """Format a duration in seconds to a short human-readable string"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes, secs = divmod(int(seconds), 60)
    if minutes < 60:
        return f"{minutes}m{secs:02d}s"
    hours, minutes = divmod(minutes, 60)
    return f"{hours}h{minutes:02d}m"
