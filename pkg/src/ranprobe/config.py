"""YAML loading and process settings.

Test scripts and configuration files are restricted to plain maps, sequences
and scalars. Anchors, aliases and duplicate keys are rejected at load time so
that what a reader sees in the file is exactly what the framework runs.

Process settings follow flag > environment (AIT_*) > built in default."""

import os
import re

import yaml
from yaml import SafeLoader
from yaml.composer import ComposerError
from yaml.constructor import ConstructorError

from .exceptions import ConfigError, ScriptSyntaxError

ENV_PREFIX = "AIT_"

DEFAULT_SERVER_PORT = 7100
DEFAULT_CONTROL_PORT = 7200
DEFAULT_SERVER_ADDR = "127.0.0.1:7100"
DEFAULT_SUT_ADDR = "127.0.0.1:7300"
DEFAULT_STORE = "runs"
DEFAULT_HEALTH_PERIOD = 2.0
DEFAULT_SETUP_TIMEOUT = 30.0
DEFAULT_STATUS_INTERVAL = 1.0

_ENDPOINT = re.compile(r"^(?P<host>[A-Za-z0-9.\-_]+|\[[0-9A-Fa-f:]+\]):(?P<port>\d{1,5})$")


class StrictLoader(SafeLoader):
    """SafeLoader without anchors, aliases or repeated keys"""

    def compose_node(self, parent, index):
        event = self.peek_event()
        if isinstance(event, yaml.AliasEvent) or getattr(event, "anchor", None):
            raise ComposerError(
                None, None, "anchors and aliases are not allowed", event.start_mark
            )
        return super().compose_node(parent, index)

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if isinstance(key, (list, dict)):
                # unhashable, the base constructor reports it
                continue
            if key in seen:
                raise ConstructorError(
                    None, None, f"duplicate key '{key}'", key_node.start_mark
                )
            seen.add(key)
        return super().construct_mapping(node, deep=deep)


def load_document(text, source="<document>"):
    """Parse a YAML document with the strict loader"""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ScriptSyntaxError(f"not UTF-8 ({e})", source=source)
    try:
        return yaml.load(text, Loader=StrictLoader)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        raise ScriptSyntaxError(
            e.problem or str(e),
            body=text,
            source=source,
            lnum=mark.line + 1 if mark else None,
            colno=mark.column + 1 if mark else None,
        )
    except yaml.YAMLError as e:
        raise ScriptSyntaxError(str(e), body=text, source=source)


def dump_document(data):
    return yaml.safe_dump(data, sort_keys=False, allow_unicode=True, default_flow_style=False)


def env_default(name, default=None, cast=str):
    """Environment fallback for a CLI flag, AIT_ prefixed"""
    value = os.getenv(f"{ENV_PREFIX}{name}")
    if value is None or value == "":
        return default
    try:
        return cast(value)
    except ValueError:
        raise ConfigError(f"Environment variable {ENV_PREFIX}{name}={value!r} is invalid")


def parse_endpoint(text):
    """'host:port' -> (host, port)"""
    match = _ENDPOINT.match(str(text).strip())
    if not match:
        raise ValueError(f"'{text}' is not a host:port endpoint")
    port = int(match.group("port"))
    if not 0 <= port < 65536:
        raise ValueError(f"port {port} out of range")
    return match.group("host").strip("[]"), port
