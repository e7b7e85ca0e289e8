class BoxVisError(Exception):
    """Base class for library errors."""


class OriginInsideBox(BoxVisError):
    """The ego origin lies inside, or within 1e-6 m of, a box."""


class DegeneratePolygon(BoxVisError):
    """Fewer than three vertices or numerically zero area."""


class InsufficientHits(BoxVisError):
    """Too few sampled rays hit the target box for a usable estimate."""

    def __init__(self, hits, required):
        super().__init__(f"only {hits} sampled rays hit the box (need {required})")
        self.hits = hits
        self.required = required


class ParseError(BoxVisError):
    """Malformed input line. ``line`` is 1-based; ``field`` is 1-based or None."""

    def __init__(self, message, line=None, field=None, source=None):
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.field = field
        self.source = source
        self.reason = message


class GenerationExhausted(BoxVisError):
    """Scene generation hit its rejection budget."""
