"""Error type shared by every workflow operation.

Each failure mode carries a stable machine-readable code (e.g.
``NONPOSITIVE_WAVELENGTH``) so the tool server can forward it over the
wire without parsing prose.
"""

from __future__ import annotations


class ToolError(Exception):
    """Operation failure with a stable code.

    The code is the contract; the message is for humans.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
