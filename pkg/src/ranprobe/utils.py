import hashlib
import json
import sys

try:
    from rich.console import Console
    from rich.table import Table as RichTable

    # Only use Rich if we are in an interactive terminal
    _USE_RICH = sys.stdout.isatty()
except ImportError:
    _USE_RICH = False

"""
----------- Canonical serialization

Everything that is hashed, framed or stored goes through canonical_json so
equal values always produce identical bytes: sorted keys, no insignificant
whitespace, UTF-8, no NaN/Infinity.
"""


def canonical_json(obj) -> str:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


def canonical_bytes(obj) -> bytes:
    return canonical_json(obj).encode("utf-8")


def sha256_hex(data) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def digest(obj) -> str:
    """Content digest of a JSON compatible value"""
    return sha256_hex(canonical_bytes(obj))


def lookup_path(obj, path: str):
    """Resolve a dotted field path ('kpi.loss_frac.0') inside nested
    dicts/lists"""
    current = obj
    for part in path.split("."):
        if isinstance(current, dict):
            if part not in current:
                raise KeyError(path)
            current = current[part]
        elif isinstance(current, (list, tuple)):
            current = current[int(part)]
        else:
            raise KeyError(path)
    return current


def set_path(obj, path: str, value):
    """Copy of obj with the dotted field path replaced by value. Intermediate
    maps are created; list indices must already exist."""
    head, _, rest = path.partition(".")
    if isinstance(obj, list):
        index = int(head)
        if not 0 <= index < len(obj):
            raise KeyError(path)
        out = list(obj)
        out[index] = set_path(out[index], rest, value) if rest else value
        return out
    if obj is None:
        obj = {}
    if not isinstance(obj, dict):
        raise KeyError(path)
    out = dict(obj)
    out[head] = set_path(out.get(head), rest, value) if rest else value
    return out


"""
---------- Optional Rich Table

Status listings must stay scriptable, so outside a terminal we print a plain
tab separated table with a fixed column order instead.
"""
if _USE_RICH:
    Table = RichTable

    def print_table(table):
        Console().print(table)
else:

    class Table:
        def __init__(self, title=None, **kwargs):
            self.title = title
            self.columns = []
            self.rows = []

        def add_column(self, header, **kwargs):
            self.columns.append(header)

        def add_row(self, *args, **kwargs):
            self.rows.append([str(x) for x in args])

    def print_table(table):
        print("\t".join(table.columns))
        for row in table.rows:
            print("\t".join(row))
