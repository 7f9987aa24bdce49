"""Shared exception base for the package.

Every error raised on a user-facing path derives from LogsynthError so
the CLI can catch one type, print the message to stderr, and exit
nonzero.
"""


class LogsynthError(Exception):
    pass
