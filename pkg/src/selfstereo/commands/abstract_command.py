from typing import Any


class Command:
    """Base for the CLI subcommands; each one exposes a single ``do`` entry point."""

    def do(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError(f"{type(self).__name__} does not implement do()")
