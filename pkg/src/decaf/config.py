import abc
import hashlib
import json
from collections import OrderedDict
from typing import List, Union, Optional, Any, Dict

from decaf.errors import DecafError
from decaf.logging import LoggableObject
from decaf.scmgen import RECIPES, RECIPE_H_FEAT, SHIFTS, SHIFT_NONE
from decaf.graph import BACKBONES, BACKBONE_SGC

METHOD_DECAF = "decaf"
METHOD_ERM = "erm"
METHODS = [METHOD_DECAF, METHOD_ERM]

SPLIT_LABEL_LEAVEOUT = "label-leaveout"
SPLIT_RANDOM = "random"
SPLITS = [SPLIT_LABEL_LEAVEOUT, SPLIT_RANDOM]

COUNTERFACTUAL_SHARED = "shared-background"
COUNTERFACTUAL_OWN = "own-confounder"
COUNTERFACTUALS = [COUNTERFACTUAL_SHARED, COUNTERFACTUAL_OWN]


class Option:
    """
    Defines a single option.
    """

    def __init__(self, name: str, value_type, def_value, help: str,
                 lower: Union[int, float] = None, upper: Union[int, float] = None,
                 choices: Optional[List] = None):
        """
        Initializes the item.

        :param name: the name of the item
        :type name: str
        :param value_type: the class of the value
        :type value_type: type
        :param def_value: the default value
        :param help: the help string
        :type help: str
        :param lower: the lower bound (for numbers, incl), unbounded if None
        :type lower: int or float
        :param upper: the upper bound (for numbers, incl), unbounded if None
        :type upper: int or float
        :param choices: the list of available options to choose from
        :type choices: list
        """
        self.name = name
        self.value_type = value_type
        self.def_value = def_value
        self.help = help
        self.lower = lower
        self.upper = upper
        self.choices = choices

    def is_in_range(self, value) -> Optional[str]:
        """
        If lower or upper numeric bound defined, checks whether the value is within range.
        If choices are defined, checks whether the value is a valid choice.

        :param value: the numeric value to check against the bounds or element to check against stored choices
        :return: None if within range, otherwise error message
        :rtype: str
        """
        if (self.lower is not None) and (value < self.lower):
            return "Below lower bound: %s < %s" % (str(value), str(self.lower))
        if (self.upper is not None) and (value > self.upper):
            return "Above upper bound: %s > %s" % (str(value), str(self.upper))
        if (self.choices is not None) and (value not in self.choices):
            return "%s is not a valid choice, available: %s" % (str(value), str(self.choices))
        return None

    def coerce(self, value) -> Any:
        """
        Turns ints into floats for float options and strings into the option type.

        :param value: the value to convert
        :return: the converted value
        """
        if (self.value_type is float) and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str) and (self.value_type is not str):
            if self.value_type is bool:
                return value.lower() in ["true", "1", "yes", "on"]
            return self.value_type(value)
        return value

    def __str__(self) -> str:
        """
        Returns a string describing the item.

        :return: the string describing the item
        :rtype: str
        """
        return "%s/%s: %s\n   %s" % (self.name, str(self.value_type.__name__), repr(self.def_value), self.help)


class OptionManager(LoggableObject):
    """
    Manages multiple options.
    """

    def __init__(self):
        """
        Initializes the manager.
        """
        self._options = OrderedDict()
        self._values = dict()

    def options(self) -> List[Option]:
        """
        Returns all options.

        :return: the options
        :rtype: list
        """
        return list(self._options.values())

    def add(self, option: Option) -> 'OptionManager':
        """
        Adds the option.

        :param option: the item to add
        :type option: Option
        :return: itself
        :rtype: OptionManager
        """
        self._options[option.name] = option
        return self

    def has(self, name: str) -> bool:
        """
        Returns whether the specified option is specified.

        :param name: the name of the item to look for
        :type name: str
        :return: true if the item is present
        :rtype: bool
        """
        return name in self._options

    def set(self, name: str, value) -> 'OptionManager':
        """
        Sets the config value.

        :param name: the name of the item to update its value for
        :type name: str
        :param value: the new value
        :return: itself
        :rtype: OptionManager
        """
        if not self.has(name):
            raise DecafError("Invalid option name: %s" % name)
        opt = self._options[name]
        try:
            value = opt.coerce(value)
        except ValueError:
            raise DecafError("Cannot convert value for %s: %s" % (name, str(value)))
        if not isinstance(value, opt.value_type):
            raise DecafError("Invalid config type for %s: expected=%s, received=%s" % (name, str(opt.value_type), str(type(value))))
        msg = opt.is_in_range(value)
        if msg is not None:
            raise DecafError("Invalid value for %s: %s" % (name, msg))
        self._values[name] = value
        return self

    def get(self, name: str) -> Any:
        """
        Returns the currently stored value or the default value.

        :param name: the name of the value to retrieve
        :type name: str
        :return: the value
        :rtype: object
        """
        if not self.has(name):
            raise DecafError("Invalid option name: %s" % name)
        if name in self._values:
            return self._values[name]
        return self._options[name].def_value

    def from_dict(self, d: Dict):
        """
        Sets all the values from the dictionary.

        :param d: the dictionary to get the values from
        :type d: dict
        """
        for k in d:
            if k not in self._options:
                self.warn("Unknown option: %s/%s" % (k, d[k]))
                continue
            self.set(k, d[k])

    def to_dict(self, skip_default: bool = False) -> Dict:
        """
        Returns all the options as dictionary.

        :param skip_default: if enabled, skips values that are default ones
        :type skip_default: bool
        :return: the options as dictionary
        :rtype: dict
        """
        result = dict()
        for k in self._options:
            if not skip_default or (self.get(k) != self._options[k].def_value):
                result[k] = self.get(k)
        return result


class AbstractOptionHandler(LoggableObject, abc.ABC):
    """
    The ancestor for all classes that handle options.
    """

    def __init__(self, options: Dict = None):
        """
        Initializes the object.

        :param options: the options to set immediately
        :type options: dict
        """
        self._initialize()
        self._define_options()
        if options is not None:
            self.options = options

    def _initialize(self):
        """
        Performs initializations.
        """
        self._log_prefix = type(self).__name__

    def _define_options(self):
        """
        For configuring the options.
        """
        self._option_manager = OptionManager()
        self._option_manager.add(Option("debug", bool, False, "If enabled, outputs some debugging information"))

    def description(self) -> str:
        """
        Returns a description for the object.

        :return: the object description
        :rtype: str
        """
        return "-description missing-"

    @property
    def option_manager(self) -> OptionManager:
        """
        Returns the option manager.

        :return: the manager
        :rtype: OptionManager
        """
        return self._option_manager

    @property
    def options(self) -> Dict:
        """
        Returns the current options.

        :return: the current options
        :rtype: dict
        """
        return self._option_manager.to_dict(skip_default=True)

    @options.setter
    def options(self, d: Dict):
        """
        Sets the options to use.

        :param d: the options to set
        :type d: dict
        """
        if d is None:
            d = dict()
        self._option_manager.from_dict(d)

    @property
    def is_debug(self) -> bool:
        """
        Returns whether debug mode is on.

        :return: true if on
        :rtype: bool
        """
        return self.get("debug")

    def get(self, name: str) -> Any:
        """
        Returns the value for the specified option.

        :param name: the name of the option to retrieve
        :type name: str
        :return: the value of the option
        """
        return self._option_manager.get(name)

    def set(self, name: str, value: Any) -> 'AbstractOptionHandler':
        """
        Sets the value for the specified option.

        :param name: the name of the option to set
        :type name: str
        :param value: the value of the option to set
        :return: itself
        :rtype: AbstractOptionHandler
        """
        self._option_manager.set(name, value)
        return self

    def _get_log_prefix(self) -> str:
        """
        Returns the log prefix for this object.

        :return: the prefix
        :rtype: str
        """
        return self._log_prefix


class ExperimentConfig(AbstractOptionHandler):
    """
    All settings of a single experiment: dataset, shift, split, method and
    hyperparameters. A config plus the code version determines the outputs.
    """

    def description(self) -> str:
        return "Configures dataset generation, distribution shift, splitting and training of an experiment."

    def _define_options(self):
        super()._define_options()
        m = self._option_manager
        m.add(Option("recipe", str, RECIPE_H_FEAT, "The synthetic dataset recipe", choices=RECIPES))
        m.add(Option("dataset", str, "", "Directory of a stored dataset to use instead of a recipe"))
        m.add(Option("test_dataset", str, "", "Directory of a stored dataset to test on, for stored datasets only"))
        m.add(Option("num_nodes", int, 2000, "The number of nodes to generate", lower=2))
        m.add(Option("mean_degree", float, 0.0, "The target mean degree, 0 for the recipe default", lower=0.0))
        m.add(Option("shift", str, SHIFT_NONE, "The distribution shift of the test graph", choices=SHIFTS))
        m.add(Option("magnitude", float, 0.8, "The shift magnitude", lower=0.0))
        m.add(Option("split", str, SPLIT_LABEL_LEAVEOUT, "How to split the training graph", choices=SPLITS))
        m.add(Option("split_groups", int, 3, "The number of class groups for label-leaveout", lower=3))
        m.add(Option("major_share", float, 0.8, "The share of the dominating class group per split", lower=0.0, upper=1.0))
        m.add(Option("method", str, METHOD_DECAF, "The training method", choices=METHODS))
        m.add(Option("backbone", str, BACKBONE_SGC, "The GNN backbone of the ERM baseline", choices=BACKBONES))
        m.add(Option("gamma", float, 0.5, "The weight of the feature effect in the final prediction", lower=0.0, upper=1.0))
        m.add(Option("tune_gamma", bool, False, "Whether to select gamma on the validation set"))
        m.add(Option("cf_samples", int, 16, "The number of background counterfactual samples", lower=1))
        m.add(Option("counterfactual", str, COUNTERFACTUAL_SHARED, "How to form the counterfactual outcome", choices=COUNTERFACTUALS))
        m.add(Option("layers", int, 2, "The number of propagation hops", lower=1))
        m.add(Option("hidden", int, 64, "The hidden/embedding size", lower=1))
        m.add(Option("lr", float, 1e-3, "The Adam learning rate", lower=0.0))
        m.add(Option("weight_decay", float, 1e-5, "The (coupled) weight decay", lower=0.0))
        m.add(Option("epochs", int, 300, "The maximum number of epochs per training stage", lower=1))
        m.add(Option("patience", int, 50, "Epochs without validation improvement before stopping", lower=1))
        m.add(Option("step_ratio", int, 5, "Updates of g/h per update of the propensity model", lower=1))
        m.add(Option("batch", int, 0, "The mini-batch size, 0 for full batch", lower=0))
        m.add(Option("seed", int, 1, "The seed for all random generators", lower=0))

    def to_dict(self) -> Dict:
        """
        Returns all option values, including defaults.

        :return: the values
        :rtype: dict
        """
        return self._option_manager.to_dict(skip_default=False)

    def fingerprint(self) -> str:
        """
        SHA-256 of the canonical JSON of all option values (debug excluded).

        :return: the hex digest
        :rtype: str
        """
        d = self.to_dict()
        d.pop("debug", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()

    def copy(self, overrides: Dict = None) -> 'ExperimentConfig':
        """
        Returns a copy, optionally with some values replaced.

        :param overrides: the values to replace
        :type overrides: dict
        :return: the copy
        :rtype: ExperimentConfig
        """
        d = self.to_dict()
        if overrides is not None:
            d.update(overrides)
        return ExperimentConfig(options=d)


def load_config(path: str) -> ExperimentConfig:
    """
    Reads the config from a JSON file.

    :param path: the file to read
    :type path: str
    :return: the config
    :rtype: ExperimentConfig
    """
    with open(path, "r") as fp:
        d = json.load(fp)
    if not isinstance(d, dict):
        raise DecafError("Config file does not contain a JSON object: %s" % path)
    return ExperimentConfig(options=d)


def save_config(config: ExperimentConfig, path: str):
    """
    Writes all option values as JSON.

    :param config: the config to save
    :type config: ExperimentConfig
    :param path: the file to write to
    :type path: str
    """
    with open(path, "w") as fp:
        json.dump(config.to_dict(), fp, indent=2, sort_keys=True)
        fp.write("\n")
