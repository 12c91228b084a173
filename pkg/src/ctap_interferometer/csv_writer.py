from __future__ import annotations

import csv
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from . import __version__

LOG = logging.getLogger("ctap_interferometer.csv_writer")

TOOL_NAME = "ctap-sim"
UNITS_LINE = "units: energies in Omega_max units, times in 1/Omega_max"
FLOAT_FORMAT = ".12g"


def format_value(value: Any) -> str:
    """浮動小数点は有効数字12桁で固定書式化する"""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


class CSVWriter:
    """計算結果CSVの書き出しを管理するクラス"""

    def __init__(self, command: str, metadata: Optional[Dict[str, Any]] = None, encoding: str = "utf-8"):
        self.command = command
        self.metadata = dict(metadata or {})
        self.encoding = encoding

    @contextmanager
    def _open(self, output_path: Optional[Path]) -> Iterator[TextIO]:
        if output_path is None:
            yield sys.stdout
            return
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with output_path.open("w", newline="", encoding=self.encoding) as f:
            yield f

    def _metadata_lines(self, extra: Optional[Dict[str, Any]]) -> List[str]:
        lines = [f"# {TOOL_NAME} {__version__}", f"# command = {self.command}"]
        for key, value in {**self.metadata, **(extra or {})}.items():
            lines.append(f"# {key} = {format_value(value) or 'none'}")
        lines.append(f"# {UNITS_LINE}")
        return lines

    def write_table(self,
                    headers: Sequence[str],
                    rows: Iterable[Sequence[Any]],
                    output_path: Optional[Path] = None,
                    extra_metadata: Optional[Dict[str, Any]] = None) -> bool:
        """
        メタデータブロック付きのCSVを書き出す

        Args:
            headers: 列名
            rows: 行（列順の値）
            output_path: 出力パス（Noneなら標準出力）
            extra_metadata: 実行結果由来の追加メタデータ（当てはめ値など）

        Returns:
            書き込み成功可否
        """
        try:
            count = 0
            with self._open(output_path) as f:
                for line in self._metadata_lines(extra_metadata):
                    f.write(line + "\n")
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(headers)
                for row in rows:
                    if len(row) != len(headers):
                        raise ValueError(f"Row has {len(row)} values for {len(headers)} columns")
                    writer.writerow([format_value(v) for v in row])
                    count += 1
            LOG.info("%s CSV written: %s (%d rows)", self.command, output_path or "<stdout>", count)
            return True
        except (OSError, ValueError) as e:
            LOG.error("Failed to write %s CSV: %s", self.command, e)
            return False

    def write_spectrum(self, times: np.ndarray, energies: np.ndarray,
                       vectors: Optional[np.ndarray] = None,
                       site_labels: Sequence[str] = (),
                       state_labels: Sequence[str] = (),
                       output_path: Optional[Path] = None) -> bool:
        """t, E1..En（昇順）と、指定時は各固有状態の振幅 c_<state>_<site>"""
        n = energies.shape[1]
        headers = ["t"] + [f"E{k + 1}" for k in range(n)]
        if vectors is not None:
            headers += [f"c_{state}_{site}" for state in state_labels for site in site_labels]

        def rows():
            for k, t in enumerate(times):
                row = [t, *energies[k]]
                if vectors is not None:
                    # vectors[k] の列が固有状態
                    row += [vectors[k, i, j].real for j in range(n) for i in range(n)]
                yield row

        return self.write_table(headers, rows(), output_path)

    def write_evolution(self, times: np.ndarray, populations: np.ndarray, norms: np.ndarray,
                        site_labels: Sequence[str], output_path: Optional[Path] = None) -> bool:
        headers = ["t"] + [f"rho{s}{s}" for s in site_labels] + ["norm"]
        rows = ([t, *populations[k], norms[k]] for k, t in enumerate(times))
        return self.write_table(headers, rows, output_path)

    def write_grid(self, names: Tuple[str, str, str], axis1: np.ndarray, axis2: np.ndarray,
                   grid: np.ndarray, output_path: Optional[Path] = None,
                   extra_columns: Optional[Dict[str, np.ndarray]] = None,
                   extra_metadata: Optional[Dict[str, Any]] = None) -> bool:
        """2次元格子を行優先の長形式で書き出す（map / timesweep / sensitivity）"""
        extra_columns = extra_columns or {}
        headers = list(names) + list(extra_columns)

        def rows():
            for i, a in enumerate(axis1):
                for j, b in enumerate(axis2):
                    yield [a, b, grid[i, j], *(column[i, j] for column in extra_columns.values())]

        return self.write_table(headers, rows(), output_path, extra_metadata)

    def write_fringes(self, fits: Sequence[Any], output_path: Optional[Path] = None,
                      extra_metadata: Optional[Dict[str, Any]] = None) -> bool:
        headers = ["t_max", "n", "delta_n", "fit_delta_n", "residual", "f"]
        rows = (
            [fit.t_max, int(n), pos, fit.f * n / fit.t_max, res, fit.f]
            for fit in fits
            for n, pos, res in zip(fit.indices, fit.positions, fit.residuals)
        )
        return self.write_table(headers, rows, output_path, extra_metadata)

    def write_adiabaticity(self, rows: Iterable[Tuple[float, float, float]],
                           output_path: Optional[Path] = None) -> bool:
        return self.write_table(["delta", "A_max_numeric", "A_series"], rows, output_path)


def parse_table(text: str) -> Tuple[Dict[str, str], List[str], np.ndarray]:
    """
    CSVWriter の出力文字列を (メタデータ, ヘッダー, 数値配列) に分解する

    Args:
        text: CSV全文（ファイル内容または標準出力）

    Returns:
        (メタデータ辞書, ヘッダー, 行 × 列 の float 配列)
    """
    metadata: Dict[str, str] = {}
    body: List[str] = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition(" = ")
            if sep:
                metadata[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        return metadata, [], np.empty((0, 0))
    headers = rows[0]
    values = np.array([[float(x) for x in row] for row in rows[1:]], dtype=float).reshape(-1, len(headers))
    return metadata, headers, values


def read_csv(input_path: Path, encoding: str = "utf-8") -> Tuple[Dict[str, str], List[str], np.ndarray]:
    """CSVWriter が書いたファイルを読み戻す"""
    return parse_table(input_path.read_text(encoding=encoding))
