import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
from tqdm import tqdm

from stationproc.filling import DIRECTION_COLUMN, SPEED_COLUMN, precip_contextual_fill, spline_fill, wind_fill
from stationproc.series import PRECIP_COLUMN, VARIABLES, StationSeries, read_pws_csv, write_pws_csv
from stationproc.validation import ViolationReport, validate_physical
from utils.errors import M3RError, TooFewKnots

# Spline-filled one at a time; the averaged wind vector and precipitation have dedicated fills.
CONTINUOUS_COLUMNS = [name for name in VARIABLES if name not in (DIRECTION_COLUMN, SPEED_COLUMN, PRECIP_COLUMN)]
NON_NEGATIVE_COLUMNS = [name for name in VARIABLES if name.startswith(("wind_speed", "wind_gust"))]


def violation_report_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".violations.txt")


class StationProcessor:
    def __init__(self, precip_window_hours: float = 2.5, repair: bool = True, jobs: int = 1):
        self.logger = logging.getLogger(__name__)
        self.precip_window_hours = precip_window_hours
        self.repair = repair
        self.jobs = max(1, jobs)

    def fill(self, series: StationSeries) -> Tuple[StationSeries, ViolationReport]:
        out = series.copy()
        for name in CONTINUOUS_COLUMNS:
            if not np.isnan(out.columns[name]).any():
                continue
            try:
                out.columns[name] = spline_fill(out.timestamps, out.columns[name])
            except TooFewKnots as e:
                raise TooFewKnots(f"{name}: {e.message}")
        for name in NON_NEGATIVE_COLUMNS:
            out.columns[name] = np.clip(out.columns[name], 0.0, None)

        out = wind_fill(out)
        out = precip_contextual_fill(out, self.precip_window_hours)
        return validate_physical(out, repair=self.repair)

    def process_file(self, input_path: Path, output_path: Path) -> Dict[str, Any]:
        try:
            series = read_pws_csv(input_path)
            missing_before = sum(series.missing_counts().values())
            filled, report = self.fill(series)
            write_pws_csv(filled, output_path)
            report_path = report.write(violation_report_path(output_path))
            self.logger.info(
                f"Filled {missing_before} gaps in {input_path.name}; {len(report)} violation(s) -> {report_path}"
            )
            return {
                'success': True,
                'path': str(input_path),
                'output': str(output_path),
                'violations_report': report_path,
                'rows': len(filled),
                'gaps_filled': missing_before,
                'violations': report.counts(),
            }
        except M3RError as e:
            e.with_context(input_path)
            self.logger.error(f"Failed to fill {input_path}: {e}")
            return {'success': False, 'path': str(input_path), 'error': str(e), 'exception': e}

    def process_files(self, jobs: List[Tuple[Path, Path]]) -> List[Dict[str, Any]]:
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            futures = [pool.submit(self.process_file, src, dst) for src, dst in jobs]
            return [f.result() for f in tqdm(futures, desc="Filling station series")]
