"""Line-oriented ``key = value`` config parsing shared by the simulator and
run configuration.  ``#`` starts a comment.  ``fault`` lines declare
telemetry perturbations::

    fault <name> path=<dotted.path> state=<State> [bias=<float>] [gain=<float>]
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["ConfigError", "FaultSpec", "parse_kv_text"]


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class FaultSpec:
    name: str
    path: str
    state: str
    bias: float = 0.0
    gain: float = 1.0


def parse_kv_text(text: str) -> tuple[dict[str, str], list[FaultSpec]]:
    """Returns (key->raw value, fault specs); duplicate keys are rejected."""
    values: dict[str, str] = {}
    faults: list[FaultSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("fault "):
            tokens = line.split()
            if len(tokens) < 4:
                raise ConfigError("fault needs a name, path= and state=", lineno)
            name = tokens[1]
            attrs = {}
            for tok in tokens[2:]:
                if "=" not in tok:
                    raise ConfigError(f"malformed fault attribute {tok!r}", lineno)
                k, v = tok.split("=", 1)
                attrs[k] = v
            unknown = set(attrs) - {"path", "state", "bias", "gain"}
            if unknown:
                raise ConfigError(f"unknown fault attribute {sorted(unknown)}", lineno)
            if "path" not in attrs or "state" not in attrs:
                raise ConfigError("fault needs path= and state=", lineno)
            try:
                bias = float(attrs.get("bias", "0"))
                gain = float(attrs.get("gain", "1"))
            except ValueError:
                raise ConfigError("fault bias/gain must be numeric", lineno) from None
            faults.append(FaultSpec(name, attrs["path"], attrs["state"], bias, gain))
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError("empty key or value", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        values[key] = value
    return values, faults
