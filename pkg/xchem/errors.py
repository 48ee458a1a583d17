"""Exception hierarchy shared by every pipeline phase."""


class XChemError(Exception):
    """Base class; the CLI turns these into exit code 1."""


class ConfigurationError(XChemError):
    pass


class ParseError(XChemError):
    '''
    Raised when an input record cannot be read.

    Params:
        line: (int) 1-based line number inside the record, when known.
    '''

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append('line {0}'.format(line))
        prefix = '{0}: '.format(', '.join(where)) if where else ''
        super().__init__(prefix + message)


class BackendUnavailableError(XChemError):
    """Transport failure talking to a chat or embedding backend (retriable)."""


class ProposalError(XChemError):
    """The Selector reply could not be turned into a usable proposal."""

    def __init__(self, message, reply=''):
        self.reply = reply
        super().__init__(message)


class DialogueError(XChemError):
    pass


class MissingEmbeddingError(XChemError):
    def __init__(self, descriptor):
        self.descriptor = descriptor
        super().__init__('no cached embedding for descriptor {0}'.format(descriptor))


class TrainingDivergedError(XChemError):
    pass


class PipelineError(XChemError):
    '''Per-molecule failure; `molecule_id` lets the CLI enumerate failures.'''

    def __init__(self, message, molecule_id=None):
        self.molecule_id = molecule_id
        super().__init__(message)
