"""JSON model documents.

A document has exactly the top-level keys ``regimes``, ``generator``,
``delta``, ``loss`` and ``utility``::

    {
      "regimes": [{"r": 0.08, "mu": 0.2, "sigma": 0.25, "lambda": 0.1,
                   "theta": 0.15, "eta": 0.8}, ...],
      "generator": [[-6.04, 6.04], [6.4, -6.4]],
      "delta": 0.15,
      "loss": {"kind": "constant", "l": 0.3},
      "utility": {"kind": "negative_power", "alpha": -1}
    }

Each regime may also carry ``"insured": false`` to close its insurance
market. Unknown or missing keys raise :class:`~regime_insurance.errors.ConfigError`
naming the key.
"""

import json
from pathlib import Path
from typing import Any, Mapping, Tuple, Union

from .chain import validate_generator
from .errors import ConfigError, InvalidGenerator, InvalidParameter
from .market import (
    CONSTANT,
    LOG,
    NEGATIVE_POWER,
    POSITIVE_POWER,
    REGIME_SQRT,
    LossModel,
    MarketModel,
    RegimeParams,
    UtilitySpec,
)

TOP_LEVEL_KEYS = ("regimes", "generator", "delta", "loss", "utility")
REGIME_KEYS = ("r", "mu", "sigma", "lambda", "theta", "eta")
OPTIONAL_REGIME_KEYS = ("insured",)


def _check_keys(document: Any, key: str, required, optional=()) -> None:
    if not isinstance(document, Mapping):
        raise ConfigError(key, "expected an object")
    for name in document:
        if name not in required and name not in optional:
            raise ConfigError(f"{key}.{name}" if key else name, "unknown key")
    for name in required:
        if name not in document:
            raise ConfigError(f"{key}.{name}" if key else name, "missing key")


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    return float(value)


def _regime(document: Any, index: int) -> RegimeParams:
    key = f"regimes[{index}]"
    _check_keys(document, key, REGIME_KEYS, OPTIONAL_REGIME_KEYS)
    values = {name: _number(document[name], f"{key}.{name}") for name in REGIME_KEYS}
    insured = document.get("insured", True)
    if not isinstance(insured, bool):
        raise ConfigError(f"{key}.insured", f"expected true or false, got {insured!r}")
    try:
        return RegimeParams(
            r=values["r"],
            mu=values["mu"],
            sigma=values["sigma"],
            lam=values["lambda"],
            theta=values["theta"],
            eta=values["eta"],
            insured=insured,
        )
    except InvalidParameter as err:
        name = "lambda" if err.name == "lam" else err.name
        raise ConfigError(f"{key}.{name}", str(err)) from err


def _loss(document: Any) -> LossModel:
    kind = document.get("kind") if isinstance(document, Mapping) else None
    if kind == CONSTANT:
        _check_keys(document, "loss", ("kind", "l"))
        l = _number(document["l"], "loss.l")
    else:
        _check_keys(document, "loss", ("kind",))
        l = None
    try:
        return LossModel(kind, l)
    except InvalidParameter as err:
        raise ConfigError(f"loss.{err.name.split('.')[-1]}", str(err)) from err


def _utility(document: Any) -> UtilitySpec:
    kind = document.get("kind") if isinstance(document, Mapping) else None
    try:
        if kind in (NEGATIVE_POWER, POSITIVE_POWER):
            _check_keys(document, "utility", ("kind", "alpha"))
            return UtilitySpec(kind, _number(document["alpha"], "utility.alpha"))
        if kind == REGIME_SQRT:
            _check_keys(document, "utility", ("kind", "beta"))
            beta = document["beta"]
            if not isinstance(beta, list):
                raise ConfigError("utility.beta", "expected a list of two weights")
            weights = [_number(b, f"utility.beta[{i}]") for i, b in enumerate(beta)]
            return UtilitySpec(kind, beta=tuple(weights))
        _check_keys(document, "utility", ("kind",))
        return UtilitySpec(kind)
    except InvalidParameter as err:
        raise ConfigError(f"utility.{err.name.split('.')[-1]}", str(err)) from err


def parse_config(document: Mapping) -> Tuple[MarketModel, UtilitySpec]:
    """Build the model and utility a parsed document describes."""
    _check_keys(document, "", TOP_LEVEL_KEYS)

    regimes = document["regimes"]
    if not isinstance(regimes, list) or not regimes:
        raise ConfigError("regimes", "expected a nonempty list")
    params = [_regime(entry, i) for i, entry in enumerate(regimes)]

    rates = document["generator"]
    if not isinstance(rates, list) or not all(isinstance(row, list) for row in rates):
        raise ConfigError("generator", "expected a list of rows")
    for i, row in enumerate(rates):
        for j, rate in enumerate(row):
            _number(rate, f"generator[{i}][{j}]")
    try:
        generator = validate_generator(rates)
    except InvalidGenerator as err:
        key = "generator" if err.row is None else f"generator[{err.row}]"
        raise ConfigError(key, err.reason) from err

    delta = _number(document["delta"], "delta")
    loss = _loss(document["loss"])
    utility = _utility(document["utility"])
    try:
        model = MarketModel(generator=generator, regimes=params, delta=delta, loss=loss)
    except InvalidParameter as err:
        raise ConfigError(err.name, str(err)) from err
    return model, utility


def load_config(source: Union[str, Path, Mapping]) -> Tuple[MarketModel, UtilitySpec]:
    """Read a JSON document from a path (or take an already parsed mapping)."""
    if isinstance(source, Mapping):
        return parse_config(source)
    path = Path(source)
    try:
        document = json.loads(path.read_text(encoding="utf8"))
    except OSError as err:
        raise ConfigError(str(path), f"cannot read config: {err.strerror}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(str(path), f"invalid JSON at line {err.lineno}: {err.msg}") from err
    return parse_config(document)


def dump_config(model: MarketModel, utility: UtilitySpec) -> dict:
    regimes = []
    for params in model.regimes:
        entry = {
            "r": params.r,
            "mu": params.mu,
            "sigma": params.sigma,
            "lambda": params.lam,
            "theta": params.theta,
            "eta": params.eta,
        }
        if not params.insured:
            entry["insured"] = False
        regimes.append(entry)

    loss = {"kind": model.loss.kind}
    if model.loss.kind == CONSTANT:
        loss["l"] = model.loss.l

    described = {"kind": utility.kind}
    if utility.kind in (NEGATIVE_POWER, POSITIVE_POWER):
        described["alpha"] = utility.exponent
    elif utility.kind == REGIME_SQRT:
        described["beta"] = list(utility.beta)
    elif utility.kind != LOG:
        raise InvalidParameter("utility.kind", utility.kind, "cannot be serialised")

    return {
        "regimes": regimes,
        "generator": model.generator.to_list(),
        "delta": model.delta,
        "loss": loss,
        "utility": described,
    }


def save_config(path: Union[str, Path], model: MarketModel, utility: UtilitySpec) -> Path:
    path = Path(path)
    path.write_text(json.dumps(dump_config(model, utility), indent=2) + "\n", encoding="utf8")
    return path
