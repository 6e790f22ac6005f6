"""Key-value configuration files.

Grammar: one `key = value` per line; `#` starts a comment; blank lines
ignored.  An optional `[section]` header prefixes following keys with
`section.`, so

    [split]
    seed = 7

is the same as `split.seed = 7`.  Values stay strings until a consumer
coerces them; helpers below cover the common types.
"""

from __future__ import annotations

from pathlib import Path

from rewardlab.errors import DataFormatError, ValidationError
from rewardlab.evaluation import CostModel


def load_config(path: str | Path) -> dict[str, str]:
    path = Path(path)
    out: dict[str, str] = {}
    section = ""
    for lineno, raw in enumerate(path.read_text("utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise DataFormatError(path, lineno, "expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise DataFormatError(path, lineno, "empty key")
        full = f"{section}.{key}" if section else key
        out[full] = value.strip()
    return out


def get_float(cfg: dict[str, str], key: str, default: float | None = None) -> float | None:
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise ValidationError(f"config key {key!r}: {cfg[key]!r} is not a number") from None


def get_int(cfg: dict[str, str], key: str, default: int | None = None) -> int | None:
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError:
        raise ValidationError(f"config key {key!r}: {cfg[key]!r} is not an integer") from None


def get_bool(cfg: dict[str, str], key: str, default: bool | None = None) -> bool | None:
    if key not in cfg:
        return default
    value = cfg[key].strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ValidationError(f"config key {key!r}: {cfg[key]!r} is not a boolean")


def parse_float_list(text: str, what: str = "value") -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"{what}: {text!r} is not a comma-separated number list") from None


def parse_int_list(text: str, what: str = "value") -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"{what}: {text!r} is not a comma-separated integer list") from None


def parse_str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def thresholds_from_config(cfg: dict[str, str]) -> tuple[dict[str, float], float | None]:
    """Collect `threshold.<attribute>` keys; `threshold.coarse` is the coarse
    threshold."""
    thresholds = {}
    coarse = None
    for key, value in cfg.items():
        if not key.startswith("threshold."):
            continue
        name = key[len("threshold."):]
        try:
            number = float(value)
        except ValueError:
            raise ValidationError(f"config key {key!r}: {value!r} is not a number") from None
        if name == "coarse":
            coarse = number
        else:
            thresholds[name] = number
    return thresholds, coarse


def cost_model_from_config(cfg: dict[str, str]) -> CostModel:
    """Build a CostModel from `cost.coarse`, `cost.attr.<name>` and
    `cost.include_coarse` keys."""
    attribute_costs = {}
    for key, value in cfg.items():
        if key.startswith("cost.attr."):
            name = key[len("cost.attr."):]
            try:
                attribute_costs[name] = float(value)
            except ValueError:
                raise ValidationError(f"config key {key!r}: {value!r} is not a number") from None
    model = CostModel(
        coarse_cost=get_float(cfg, "cost.coarse", 1.0),
        attribute_costs=attribute_costs,
        include_coarse_for_cbm=get_bool(cfg, "cost.include_coarse", True),
        default_attribute_cost=get_float(cfg, "cost.default_attr", 1.0),
    )
    model.validate()
    return model
