import logging
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class font_colors:
    '''
    Colors for printing messages to stdout.
    '''
    PURPLE = '\033[95m'
    BLUE = '\033[94m'
    CYAN = '\033[96m'
    GREEN = '\033[92m'
    YELLOW = '\033[93m'
    RED = '\033[91m'
    BOLD = '\033[1m'
    UNDERLINE = '\033[4m'
    ENDC = '\033[0m'


LEVEL_COLORS = {
    logging.DEBUG: font_colors.CYAN,
    logging.INFO: font_colors.GREEN,
    logging.WARNING: font_colors.YELLOW,
    logging.ERROR: font_colors.RED,
    logging.CRITICAL: font_colors.RED + font_colors.BOLD,
}


class ColorFormatter(logging.Formatter):
    '''
    Prefixes every record with its level name painted in the level's color.
    '''

    def format(self, record):
        color = LEVEL_COLORS.get(record.levelno, '')
        message = super().format(record)
        return f'{color}{record.levelname:<7}{font_colors.ENDC} {message}'


def root_logger() -> logging.Logger:
    '''
    Returns the package root logger, installing its handler on first use.
    '''
    root = logging.getLogger('dse')
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(ColorFormatter('%(name)s: %(message)s'))
        root.addHandler(handler)
        root.setLevel(logging.INFO)
        root.propagate = False

    return root


def get_logger(name: str) -> logging.Logger:
    return root_logger().getChild(name.split('.')[-1])


def set_verbosity(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    root_logger().setLevel(level)


def parse_toml(text: str, source: str = '<string>') -> dict:
    '''
    Parses a TOML document, turning syntax errors into ValueError that
    names the source and the offending line.

    Parameters
    ----------
    text: str
        The document contents.
    source: str
        A label for the document (usually its path), used in messages.

    Returns
    -------
    dict: the parsed document.
    '''
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ValueError(f'{source}: malformed document ({e})') from e


def run_seed_sequence(seed: int, run: int, *keys: int) -> np.random.SeedSequence:
    '''
    Derives the seed sequence of one Monte Carlo run (and optionally of a
    sub-stream inside it, e.g. one bus) from the master seed.

    Streams are keyed by index, so adding runs or buses never perturbs the
    streams that already exist.
    '''
    return np.random.SeedSequence(entropy=seed, spawn_key=(run, *keys))


def run_generator(seed: int, run: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(run_seed_sequence(seed, run, *keys))
