"""Exception hierarchy shared across the package."""


class MdpMinError(Exception):
    """Base class for every error raised by this package."""


class ModelError(MdpMinError):
    """Invalid in-memory model data: bad distribution, partition, or MDP structure."""


class PrismError(MdpMinError):
    """Base for errors tied to PRISM source text."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            message = f"{loc}: {message}"
        super().__init__(message)


class PrismParseError(PrismError):
    """Lexical or syntactic error, or an unsupported construct."""


class PrismTypeError(PrismError):
    """Undeclared identifier or int/bool type mismatch."""


class InstantiationError(PrismError):
    """Bad parameter bindings or constants that do not fold to legal values."""


class ExploreError(MdpMinError):
    """Semantic error during state-space exploration (range violation, bad probability)."""


class ExplicitFormatError(MdpMinError):
    """Malformed or inconsistent .sta/.tra/.lab file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = str(path)
            if line is not None:
                prefix += f":{line}"
            prefix += ": "
        super().__init__(prefix + message)


class ResourceLimitError(MdpMinError):
    """A configured resource limit (states, timeout, memory) was exceeded."""

    def __init__(self, kind, message):
        self.kind = kind  # "states" | "timeout" | "memory"
        super().__init__(message)


class ConvergenceError(MdpMinError):
    """Iterative numeric method hit its iteration cap before converging."""


class PipelineError(MdpMinError):
    """Error in the classifier-seeded initialization pipeline, tagged with its step."""

    def __init__(self, step, message):
        self.step = step
        super().__init__(f"[{step}] {message}")
