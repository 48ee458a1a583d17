import os, sys, argparse, subprocess

from xchem.commands import Command, CommandManager
from xchem.errors import XChemError

# Project defaults
FLASK_APP = 'xchem/server/__init__.py'
DEFAULT_IP = '127.0.0.1:11434'

class ShellCommand(Command):
	'''A Command whose action is a shell line built from the host/port conf.'''
	def __init__(self, name, descr, runcmd, env={}):
		super().__init__(name, descr, self.call)
		self.shell = runcmd
		self.env = env

	def call(self, conf):
		env = dict(os.environ)
		env.update(conf)
		env.update(self.env)
		return subprocess.call(self.shell(conf), env=env, shell=True)

cm = CommandManager()

cm.add(ShellCommand(
	"build",
	"compiles python files in project into .pyc binaries",
	lambda c: 'python -m compileall xchem'))

cm.add(ShellCommand(
	"start",
	"serves the stub chat/embedding backends with gunicorn",
	lambda c: 'gunicorn -b {0}:{1} xchem.server:app'.format(c['host'], c['port']),
	{
		'FLASK_APP': FLASK_APP,
		'FLASK_DEBUG': 'false'
	}))

cm.add(ShellCommand(
	"run",
	"runs the stub backends on Flask's dev server with debugger & reloader",
	lambda c: 'python -m flask run --host={0} --port={1} --debugger --reload'.format(c['host'], c['port']),
	{
		'FLASK_APP': FLASK_APP,
		'FLASK_DEBUG': 'true'
	}))

cm.add(ShellCommand(
	"test",
	"runs all tests inside of `tests` directory",
	lambda c: 'python -m unittest discover -s tests -p "*_tests.py"'))

# Create and format argument parser for CLI
parser = argparse.ArgumentParser(description=cm.availableCommands(),
								 formatter_class=argparse.RawDescriptionHelpFormatter)
parser.add_argument("subcommand", help="subcommand to run (see list above)")
parser.add_argument("ipaddress", nargs='?', default=DEFAULT_IP,
					help="address and port to run on (i.e. {0})".format(DEFAULT_IP))

if __name__ == '__main__':
	if len(sys.argv) == 1:
		print(cm.availableCommands())
		sys.exit(0)
	args = parser.parse_args()
	addr = args.ipaddress.split(':')
	conf = {
		'host': addr[0],
		'port': addr[1],
	}
	try:
		sys.exit(cm.run(args.subcommand, conf))
	except XChemError as error:
		print(error)
		sys.exit(2)
	except KeyboardInterrupt:
		sys.exit(130)
