"""Language code to display name table.

Codes are ISO 639-3. The table must cover every language a pipeline run
targets; directive rendering and benchmark construction both refuse
unknown codes rather than guessing a display name.
"""

from __future__ import annotations

from .errors import ConfigError

DISPLAY_NAMES: dict[str, str] = {
    "eng": "English",
    "deu": "German",
    "por": "Portuguese",
    "hun": "Hungarian",
    "lit": "Lithuanian",
    "gle": "Irish",
    "mlt": "Maltese",
    "zho": "Chinese",
    "hin": "Hindi",
    "fra": "French",
    "fin": "Finnish",
    "tur": "Turkish",
}


def display_name(code: str) -> str:
    """Return the display name for a language code, or raise ConfigError."""
    try:
        return DISPLAY_NAMES[code]
    except KeyError:
        raise ConfigError(
            f"no display name for language code {code!r}; "
            f"known codes: {', '.join(sorted(DISPLAY_NAMES))}"
        ) from None
