"""
Shared flags and error handling for the reverse Ising management commands.

Exit statuses: 0 success, 2 configuration error (bad flags, bad config file,
invalid shapes or values), 3 runtime failure (solver, sampling, training,
benchmark ordering or file errors while running). A ValueError is a
configuration error only while the run config is being resolved.
"""
import logging

from django.core.exceptions import ImproperlyConfigured, ValidationError
from django.core.management.base import BaseCommand, CommandError

from backend.reverse_ising.config import load_run_config
from backend.reverse_ising.exceptions import ReverseIsingError
from backend.reverse_ising.ising_model import MODES

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
RUNTIME_ERROR = 3

# Flag dest -> RunConfig field
_CONFIG_FLAGS = {
    'problem': 'problem',
    'range': 'box',
    'lam': 'lam',
    'beta': 'beta',
    'seed': 'seed',
    'out': 'out',
    'mode': 'mode',
    'balance': 'balance',
    'trees': 'trees',
    'depth': 'depth',
    'layers': 'layers',
    'epochs': 'epochs',
    'starts': 'starts',
    'max_iterations': 'max_iterations',
    'table': 'table',
    'correct_aux_free': 'correct_aux_free',
}


def _messages(error) -> str:
    if isinstance(error, ValidationError):
        return '; '.join(error.messages)
    return str(error)


class ReverseIsingCommand(BaseCommand):
    """Base class: parses the shared flags into a RunConfig and maps failures to exit codes."""

    def add_arguments(self, parser):
        parser.add_argument('--problem', help="Preset 1-4, 'example', or 'p,q,alpha' for a multiplier")
        parser.add_argument('--shape', help='System shape as N,n,alpha')
        parser.add_argument('--range', help='Dynamic range of h and J as lo,hi')
        parser.add_argument('--lambda', dest='lam', type=float, help='Smoothed-max sharpness')
        parser.add_argument('--beta', type=float, help='Inverse temperature')
        parser.add_argument('--seed', type=int, help='Base seed for every random choice')
        parser.add_argument('--out', help='Output path')
        parser.add_argument('--mode', choices=MODES, help='Auxiliary spins of wrong states fixed or free')
        parser.add_argument('--balance', type=float, help='Target feasible fraction when sampling arrays')
        parser.add_argument('--trees', type=int, help='Forest size')
        parser.add_argument('--depth', type=int, help='Maximum tree depth')
        parser.add_argument('--layers', help='MLP hidden widths, e.g. 64,32')
        parser.add_argument('--epochs', type=int, help='MLP training epochs')
        parser.add_argument('--starts', type=int, help='Solver starting points')
        parser.add_argument('--max-iterations', type=int, help='Solver iteration cap per start')
        parser.add_argument('--table', help='Truth table file to use instead of a multiplier')
        parser.add_argument('--config', help='Flat key = value run config (a previous report works)')
        parser.add_argument(
            '--correct-aux-free',
            action='store_true',
            default=None,
            help='Let the auxiliary spins of correct states vary as well',
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, config, options):
        raise NotImplementedError

    def handle(self, *args, **options):
        flags = {field: options.get(dest) for dest, field in _CONFIG_FLAGS.items()}
        flags['shape'] = options.get('shape')
        try:
            config = load_run_config(flags, options.get('config'))
        except (ImproperlyConfigured, ValidationError, ValueError) as e:
            raise self.configuration_error(e) from e
        try:
            return self.run(config, options)
        except (ImproperlyConfigured, ValidationError) as e:
            raise self.configuration_error(e) from e
        except (ReverseIsingError, OSError, ValueError) as e:
            self.stdout.write(self.style.ERROR(f'Error during {self.command_name}: {str(e)}'))
            logger.error(f'{self.command_name} failed: {str(e)}', exc_info=True)
            raise CommandError(str(e), returncode=RUNTIME_ERROR) from e

    def configuration_error(self, error) -> CommandError:
        self.stdout.write(self.style.ERROR(f'Configuration error: {_messages(error)}'))
        return CommandError(_messages(error), returncode=CONFIG_ERROR)

    def split_ratio(self, config, options) -> float:
        """``--ratio`` when given, else the config's split ratio; must lie in (0, 1)."""
        ratio = options.get('ratio')
        ratio = config.split_ratio if ratio is None else ratio
        if not 0 < ratio < 1:
            raise ImproperlyConfigured(f"--ratio must lie strictly between 0 and 1, got {ratio}")
        return ratio

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]
