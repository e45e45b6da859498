# Copyright (c) The mobility-synth developers, 2024
#
# This file is part of mobility-synth.  mobility-synth is free software: you
# can redistribute it and/or modify it under the terms of the GNU General
# Public License as published by the Free Software Foundation; either version 2
# of the License, or(at your option) any later version.
#
# This program is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY or FITNESS
# FOR A PARTICULAR PURPOSE.  See the GNU General Public License for more
# details.
#
# You should have received a copy of the GNU General Public License along with
# this program; if not, write to the Free Software Foundation, Inc., 51
# Franklin Street, Fifth Floor, Boston, MA 02110-1301 USA.
#


"""
Command-line layer.

Every subcommand is a Django management command named
``mobility_synth_<subcommand>`` deriving from ``MobilityCommand``, so inside a
project they run as ``manage.py mobility_synth_train ...``. The console
script ``mobility-synth <subcommand> ...`` configures a minimal settings
object when none is present and dispatches to the same commands.

Options can also come from a flat ``--config`` file of ``key = value``
lines whose keys are flag names; flags given on the command line win, and
unknown keys are rejected.
"""

import logging
import os
import sys

from django.core.management.base import BaseCommand, CommandError

from mobility_synth.exceptions import FileFormatError, MobilitySynthError
from mobility_synth.fileformats import normalize_key, parse_key_values, write_key_values

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('preprocess', 'synth-data', 'pretrain', 'train', 'generate', 'evaluate', 'run', 'budget')

TRUE_WORDS = ('1', 'true', 'yes', 'on')


def command_name(subcommand):
    return 'mobility_synth_' + subcommand.replace('-', '_')


def _flag_value(kind, text):
    if kind is bool:
        return text.strip().lower() in TRUE_WORDS
    return kind(text)


class MobilityCommand(BaseCommand):
    """
    Base class of the mobility_synth commands.

    Subclasses declare their options in ``add_command_arguments`` through
    ``self.flag`` (which keeps track of option names and types for config
    files) and implement ``run(options)``. Library errors surface as
    ``CommandError`` carrying the library's message.
    """

    subcommand = None

    def flag(self, parser, name, kind=str, **kwargs):
        dest = normalize_key(name)
        self._flags[dest] = kind
        if kind is bool:
            parser.add_argument(name, dest=dest, action='store_true', default=None, **kwargs)
        else:
            parser.add_argument(name, dest=dest, type=kind, default=None, **kwargs)

    def add_arguments(self, parser):
        self._flags = {}
        parser.add_argument('--config', dest='config', default=None,
                            help='Read default option values from a key = value file')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def merge_config(self, options):
        path = options.get('config')
        if not path:
            return options
        try:
            values = parse_key_values(path)
        except (IOError, OSError) as e:
            raise CommandError("Cannot read config file %s: %s" % (path, e))
        except FileFormatError as e:
            raise CommandError(str(e))
        for key, text in values.items():
            if key not in self._flags:
                raise CommandError("Unknown option '%s' in config file %s" % (key, path))
            if options.get(key) is None:
                try:
                    options[key] = _flag_value(self._flags[key], text)
                except ValueError:
                    raise CommandError("Bad value '%s' for option '%s' in %s" % (text, key, path))
        return options

    def require(self, options, *names):
        missing = [n for n in names if options.get(n) is None]
        if missing:
            raise CommandError("Missing required option(s): %s"
                               % ', '.join('--' + n.replace('_', '-') for n in missing))

    def snapshot(self, out, options):
        """Write the resolved options of this invocation to ``out/config.txt``."""
        os.makedirs(out, exist_ok=True)
        pairs = [(key, options[key]) for key in sorted(self._flags)
                 if options.get(key) is not None and options.get(key) is not False]
        write_key_values(os.path.join(out, 'config.txt'), pairs)

    def handle(self, *args, **options):
        options = self.merge_config(dict(options))
        try:
            return self.run(options)
        except MobilitySynthError as e:
            raise CommandError(str(e))

    def run(self, options):
        raise NotImplementedError


def ensure_settings():
    from django.conf import settings

    if not settings.configured:
        settings.configure(INSTALLED_APPS=['mobility_synth'], LOGGING_CONFIG=None)
    import django
    django.setup()


def _verbosity(argv):
    for i, arg in enumerate(argv):
        if arg.startswith('--verbosity='):
            return arg.split('=', 1)[1]
        if arg in ('-v', '--verbosity') and i + 1 < len(argv):
            return argv[i + 1]
    return '1'


def usage():
    return "usage: mobility-synth {%s} [options]\n" % ','.join(SUBCOMMANDS)


def dispatch(argv, prog='mobility-synth'):
    """
    Run ``argv = [subcommand, flags...]``; returns the exit status (0 on
    success, 1 on a library error, 2 on usage errors).
    """
    from django.core.management import load_command_class

    if not argv or argv[0] not in SUBCOMMANDS:
        sys.stderr.write(usage())
        return 2
    ensure_settings()
    command = load_command_class('mobility_synth', command_name(argv[0]))
    try:
        command.run_from_argv([prog, argv[0]] + list(argv[1:]))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    return 0


def main():
    argv = sys.argv[1:]
    levels = {'0': logging.WARNING, '1': logging.INFO, '2': logging.DEBUG, '3': logging.DEBUG}
    logging.basicConfig(level=levels.get(_verbosity(argv), logging.INFO),
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    sys.exit(dispatch(argv))


# option groups shared by several commands
def add_privacy_flags(command, parser):
    command.flag(parser, '--epsilon', float, help='Total privacy budget')
    command.flag(parser, '--delta', float, help='Privacy parameter delta')


def add_training_flags(command, parser):
    command.flag(parser, '--arm', help='Ablation arm (baseline, baseline+pretrain, deconv, '
                                       'deconv+pretrain, deconv+multitask, full)')
    command.flag(parser, '--clip-norm', float, help='Per-trajectory gradient clip norm')
    command.flag(parser, '--sigma', float, help='Noise multiplier (planned from the budget if omitted)')
    command.flag(parser, '--batch', int, help='Expected batch size')
    command.flag(parser, '--epochs', int, help='Maximal number of epochs')
    command.flag(parser, '--lr', float, help='Learning rate')
    command.flag(parser, '--threads', int, help='Worker threads for per-example gradients')


def add_common_flags(command, parser):
    command.flag(parser, '--seed', int, help='Master random seed')
    command.flag(parser, '--out', help='Output directory')


def option(options, name, setting=None, default=None):
    """``options[name]``, else the ``setting`` value, else ``default``."""
    value = options.get(name)
    if value is not None:
        return value
    if setting is not None:
        from mobility_synth.conf import get_setting
        return get_setting(setting)
    return default
