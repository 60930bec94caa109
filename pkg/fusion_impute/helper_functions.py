from copy import deepcopy
import logging
import os
import warnings

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

logger = logging.getLogger(__name__)


class ImputeError(Exception):
    """Root of every error raised by ``fusion_impute``."""


class ConfigError(ImputeError, ValueError):
    pass


def get_env_dict():
    """
    Retrieves the environment variables used to configure
    benchmark runs and the pytest fixtures

    Returns
    -------
    env_dict: dict
        Dict containing the environment variables or their default values.
        ``seed`` is ``None`` when ``IMPUTE_SEED`` is unset.

    Raises
    ------
    ConfigError
        If ``IMPUTE_SEED`` or ``IMPUTE_WORKERS`` is not an integer.
    """
    env_dict = {}
    env_dict["seed"] = _env_int("IMPUTE_SEED", None)
    env_dict["output_dir"] = os.getenv("IMPUTE_OUTPUT_DIR", "impute_reports")
    env_dict["workers"] = _env_int("IMPUTE_WORKERS", 1)
    seeds_csv = os.getenv("IMPUTE_SEEDS_CSV", "")
    env_dict["seeds_csv"] = os.path.abspath(seeds_csv) if seeds_csv else ""
    env_dict["run_slow"] = os.getenv("IMPUTE_RUN_SLOW", "0") == "1"
    return env_dict


def _env_int(name, default):
    value = os.getenv(name, "")
    if not value.strip():
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigError("The environment variable '{}' needs to be an integer, "
                          "got {!r}.".format(name, value))


def get_scope():
    """
    Retrieves the scope of the ``fusion_impute`` fixtures

    Returns
    -------
    scope: {'function', 'module', 'session'}: default 'module'
        Scope at which the fixtures should be.

    """
    scope = os.getenv("IMPUTE_FIXTURE_SCOPE", "module")
    if scope not in ["function", "module", "session"]:
        warnings.warn("The scope '{}', given by the environment variable 'IMPUTE_FIXTURE_SCOPE' "
                      "is not a valid scope, which is why the default scope 'module' was used. "
                      "Valid scopes are 'function', 'module' and 'session'.".format(scope),
                      UserWarning)
        scope = "module"
    return scope


def pretty_logger(heading, msg, level=logging.INFO):
    """
    Helper function to log the start of a long running phase
    (pre-filling, clustering, training, benchmark records)

    Parameters
    ----------
    heading: str
        Heading of the section which should be logged
    msg: str
        Message to be logged
    level: int, default logging.INFO
        Level the banner is logged at
    """
    heading_width = 50
    decoration_str = "\n" + "#"*heading_width + "\n"
    heading = "#" + heading.center(heading_width-2) + "#"
    heading = "{decoration_str}{heading}{decoration_str}\n\n".format(decoration_str=decoration_str,
                                                                     heading=heading)
    logger.log(level, heading+msg+"\n"*2)


def _join_options(options, formater_str):
    options = [formater_str.format(option) for option in options]
    if len(options) == 1:
        return options[0]
    return "{} or {}".format(", ".join(options[:-1]), options[-1])


def arg_validator(func_locals, valid_var_dict, valid_var_overwrite=None,
                  strict_type_check=True):
    """
    Raises an appropriate Error if an option has a wrong type, value or
    lies outside of its valid range.

    Used by the config dataclasses of every imputer, e.g.:

    .. code:: python

        valid_var_dict = {"k": {"valid_types": [int], "valid_range": (1, None)},
                          "weighting": {"valid_values": ["distance", "uniform"]}}
        arg_validator({"k": 5, "weighting": "distance"}, valid_var_dict)

    Parameters
    ----------
    func_locals: dict
        Option names mapped to the values which should be checked.

    valid_var_dict: dict
        Dict of valid options with the option name as key and a dict with
        any of the keys 'valid_values', 'valid_types' and 'valid_range' as value.
        'valid_range' is a ``(low, high)`` tuple of inclusive bounds, where
        ``None`` means unbounded.

    valid_var_overwrite: dict: default None
        Used if in a special case an options valid values/types/range vary
        from the ones defined in `valid_var_dict`

    strict_type_check: bool: default True
        Whether ``type(val) in valid_types`` or ``isinstance`` is used.
        Strict checking rejects ``True`` where an ``int`` is expected.

    Raises
    ------
    TypeError
        If any of the checked options has a not supported type

    ValueError
        If any of the checked options has a not supported value or
        lies outside of its valid range
    """
    # copy by value, the overwrites must not leak into the callers table
    valid_var_dict = deepcopy(valid_var_dict)
    if valid_var_overwrite:
        error_msg = "`valid_var_overwrite` needs to be a dict of form:\n" \
                    "{'option_name':\n" \
                    "   {'valid_values':['test', {'test': 'testval'}],\n" \
                    "    'valid_types':[str, dict],\n" \
                    "    'valid_range':(0, None)}\n" \
                    "}"
        if not isinstance(valid_var_overwrite, dict):
            raise TypeError(error_msg)
        for _, value_dict in valid_var_overwrite.items():
            if not isinstance(value_dict, dict):
                raise TypeError(error_msg)
            valid_keys = ["valid_values", "valid_types", "valid_range"]
            if all([key not in value_dict.keys() for key in valid_keys]):
                raise KeyError(error_msg)
        valid_var_dict.update(valid_var_overwrite)

    for key, val in func_locals.items():
        if key not in valid_var_dict:
            continue
        validate_dict = valid_var_dict[key]
        msg_dict = {"key": key, "val_type": type(val).__name__}
        valid_types = validate_dict.get("valid_types", [])
        if len(valid_types):
            if strict_type_check:
                # ``type(val) in valid_types`` instead of isinstance, since
                # isinstance(True, int) is a false positive for numeric options
                invalid_type = type(val) not in valid_types
            else:
                invalid_type = not isinstance(val, tuple(valid_types))
            if invalid_type:
                msg_dict["type_string"] = _join_options([t.__name__ for t in valid_types],
                                                        "``{}``")
                raise TypeError("The Argument `{key}` needs to be of type "
                                "{type_string}, the type given type was "
                                "``{val_type}``.".format(**msg_dict))

        valid_values = validate_dict.get("valid_values", [])
        if len(valid_values) and val not in valid_values:
            formater_str = "'{}'" if isinstance(val, str) else "`{}`"
            msg_dict["value_string"] = _join_options(valid_values, formater_str)
            msg_dict["val"] = formater_str.format(val)
            raise ValueError("The Argument `{key}` needs to be of value "
                             "{value_string}, the given value was "
                             "{val}.".format(**msg_dict))

        low, high = validate_dict.get("valid_range", (None, None))
        if (low is not None and val < low) or (high is not None and val > high):
            msg_dict["range_string"] = "[{}, {}]".format("-inf" if low is None else low,
                                                         "inf" if high is None else high)
            raise ValueError("The Argument `{key}` needs to lie in "
                             "{range_string}, the given value was "
                             "`{val}`.".format(val=val, **msg_dict))
