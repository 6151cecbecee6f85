import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import pandas as pd

from .exceptions import IoFailure

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class FileExporter:
    """Writes every pipeline artifact once, atomically, as UTF-8"""

    @staticmethod
    def create_output_directory(dir_path: PathLike) -> str:
        try:
            os.makedirs(dir_path, exist_ok=True)
        except OSError as e:
            raise IoFailure(f"Cannot create directory: {e}", path=str(dir_path))
        return str(dir_path)

    @staticmethod
    def write_bytes(data: bytes, filepath: PathLike):
        """Write to a sibling temp file, then rename over the target"""
        target = Path(filepath)
        tmp_name = None
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with tempfile.NamedTemporaryFile(
                    dir=target.parent, prefix=f".{target.name}.", delete=False) as tmp:
                tmp_name = tmp.name
                tmp.write(data)
            os.replace(tmp_name, target)
        except OSError as e:
            if tmp_name and os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise IoFailure(f"Cannot write file: {e}", path=str(target))

    @staticmethod
    def write_text(text: str, filepath: PathLike):
        FileExporter.write_bytes(text.encode("utf-8"), filepath)

    @staticmethod
    def export_json(payload: Dict[str, Any], filepath: PathLike):
        text = json.dumps(payload, ensure_ascii=False, indent=2)
        FileExporter.write_text(text + "\n", filepath)

    @staticmethod
    def export_csv(rows: Sequence[Dict[str, Any]], columns: List[str], filepath: PathLike,
                   float_format: str = "%.6f"):
        df = pd.DataFrame(list(rows), columns=columns)
        FileExporter.write_text(
            df.to_csv(index=False, float_format=float_format, lineterminator="\n"),
            filepath)

    @staticmethod
    def export_tsv(rows: Iterable[Sequence[str]], filepath: PathLike):
        """Plain TSV without header; fields must not contain tabs or newlines"""
        lines = ["\t".join(str(field) for field in row) for row in rows]
        FileExporter.write_text("".join(line + "\n" for line in lines), filepath)
