"""Column directories: one headerless ``<name>.bin`` per column plus ``manifest.json``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bytecode import OutputDtype
from .columnar import ColumnarResult, Form, IndexForm, LeafForm, ListForm, RecordForm, StringForm

MANIFEST = "manifest.json"


def form_to_dict(form: Form) -> dict:
    if isinstance(form, LeafForm):
        return {"kind": "leaf", "content": form.content}
    if isinstance(form, IndexForm):
        return {"kind": "index", "length": form.length}
    if isinstance(form, ListForm):
        return {"kind": "list", "offsets": form.offsets, "content": form_to_dict(form.content)}
    if isinstance(form, StringForm):
        return {"kind": "string", "offsets": form.offsets, "content": form.content, "utf8": form.utf8}
    return {"kind": "record", "fields": [[n, form_to_dict(f)] for n, f in form.fields]}


def form_from_dict(d: dict) -> Form:
    kind = d["kind"]
    if kind == "leaf":
        return LeafForm(d["content"])
    if kind == "index":
        return IndexForm(d["length"])
    if kind == "list":
        return ListForm(d["offsets"], form_from_dict(d["content"]))
    if kind == "string":
        return StringForm(d["offsets"], d["content"], d["utf8"])
    return RecordForm(tuple((n, form_from_dict(f)) for n, f in d["fields"]))


def _dtype_name(arr: np.ndarray) -> str:
    for dt in OutputDtype:
        if dt.numpy == arr.dtype:
            return dt.type_name
    raise ValueError(f"no column type for {arr.dtype}")


def write_columns(out_dir: str | Path, columns: dict[str, np.ndarray], form: Form | None = None,
                  length: int | None = None, extra: dict | None = None) -> Path:
    """Write columns and a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, arr in columns.items():
        path = f"{name}.bin"
        arr = np.ascontiguousarray(arr)
        (out / path).write_bytes(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
        entries.append({"name": name, "dtype": _dtype_name(arr), "length": int(len(arr)), "path": path})
    manifest = {"columns": entries}
    if form is not None:
        manifest["form"] = form_to_dict(form)
    if length is not None:
        manifest["length"] = int(length)
    manifest.update(extra or {})
    target = out / MANIFEST
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return target


def write_result(out_dir: str | Path, result: ColumnarResult, extra: dict | None = None) -> Path:
    return write_columns(out_dir, result.columns, result.form, result.length, extra)


def read_result(out_dir: str | Path) -> ColumnarResult:
    out = Path(out_dir)
    manifest = json.loads((out / MANIFEST).read_text())
    columns = {}
    for entry in manifest["columns"]:
        dtype = OutputDtype.parse(entry["dtype"]).numpy
        arr = np.frombuffer((out / entry["path"]).read_bytes(), dtype=dtype)
        if len(arr) != entry["length"]:
            raise ValueError(f"{entry['path']}: {len(arr)} values, manifest says {entry['length']}")
        columns[entry["name"]] = arr
    return ColumnarResult(columns, form_from_dict(manifest["form"]), manifest.get("length", -1))
