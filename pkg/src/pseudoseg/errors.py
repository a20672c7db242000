"""Exception types shared across the package.

ValidationError covers rejected input data (bad files, unknown ids, schema
violations); plain ValueError is reserved for violated call contracts such
as dimension mismatches.  The CLI maps ValidationError/ValueError to exit
code 1 and OSError to exit code 2.
"""


class ValidationError(Exception):
    """Input data failed validation; the message names the offender."""


class SchemaVersionError(ValidationError):
    """Interchange file declares a schema version we do not support."""


class HashMismatchError(ValidationError):
    """Interchange file content does not match its recorded content hash."""
