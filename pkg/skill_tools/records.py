"""
Line-delimited JSON record files.

One JSON object per line. Floats go through json's repr-based encoder, so a
read after a write reproduces every float bit-exactly. Writes land in a temp
file next to the target and are moved into place with os.replace.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from .errors import FormatVersionMismatch, RecordFormatError, RecordIOError


def dumps(record: Dict) -> str:
    return json.dumps(record, separators=(',', ':'), allow_nan=False)


def write_records(path, records: Iterable[Dict]) -> int:
    """Atomically write records, returns how many were written"""
    path = Path(path)
    count = 0
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f'.{path.name}.', suffix='.tmp', dir=str(path.parent))
        try:
            with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
                for record in records:
                    f.write(dumps(record))
                    f.write('\n')
                    count += 1
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as e:
        raise RecordIOError(f"cannot write {path}: {e}") from e
    return count


def iter_records(path) -> Iterator[Tuple[int, Dict]]:
    """Yield (line number, record) pairs, skipping blank lines"""
    try:
        f = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise RecordIOError(f"cannot read {path}: {e}") from e
    with f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordFormatError(path, line_no, f"invalid JSON ({e.msg})")
            if not isinstance(record, dict):
                raise RecordFormatError(path, line_no, "record is not an object")
            yield line_no, record


def read_records(path) -> List[Tuple[int, Dict]]:
    return list(iter_records(path))


def field(record: Dict, name: str, path, line_no: Optional[int]):
    """Fetch a required field or raise a RecordFormatError naming the line"""
    if name not in record:
        raise RecordFormatError(path, line_no, f"missing field {name!r}")
    return record[name]


def floats(value, count: Optional[int], path, line_no: Optional[int], name: str) -> Tuple[float, ...]:
    """Coerce a JSON list into a float tuple of the expected length"""
    if not isinstance(value, list) or (count is not None and len(value) != count):
        expected = f"{count} numbers" if count is not None else "a list of numbers"
        raise RecordFormatError(path, line_no, f"field {name!r} must be {expected}")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise RecordFormatError(path, line_no, f"field {name!r} has non-numeric entries")


def header(format_name: str, version: int, **extra) -> Dict:
    record = {'format': format_name, 'version': version}
    record.update(extra)
    return record


def check_header(record: Dict, format_name: str, version: int, path, line_no: int) -> None:
    if record.get('format') != format_name:
        raise RecordFormatError(path, line_no, f"expected a {format_name!r} header, got {record.get('format')!r}")
    if record.get('version') != version:
        raise FormatVersionMismatch(path, line_no, f"{format_name} version {record.get('version')!r}, this build reads {version}")
