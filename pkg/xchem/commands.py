"""
Named subcommands shared by the `xchem` CLI and manage.py.
"""
import logging

from xchem.errors import XChemError

logger = logging.getLogger(__name__)


class Command:
	def __init__(self, name, descr, run):
		self.name = name
		self.descr = descr
		self.runcmd = run

	def run(self, context):
		logger.info('running %s', self.name)
		return self.runcmd(context)


class CommandManager:
	def __init__(self):
		self.commands = {}

	def add(self, command):
		self.commands[command.name] = command

	def run(self, command, context):
		if command not in self.commands:
			raise XChemError('invalid command {0!r}\n{1}'.format(command, self.availableCommands()))
		return self.commands[command].run(context)

	def availableCommands(self):
		commands = sorted(self.commands.values(), key=lambda c: c.name)
		space = max([len(c.name) for c in commands]) + 2
		description = 'available subcommands:\n'
		for c in commands:
			description += '  ' + c.name + ' ' * (space - len(c.name)) + c.descr + '\n'
		return description
