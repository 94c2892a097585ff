import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from utils.errors import FormatError  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no creation date keep reruns byte-identical
matplotlib.rcParams['svg.hashsalt'] = 'm3r-nowcast'
_SVG_METADATA = {'Date': None}

CSV_KINDS = {
    'loss': ['epoch', 'lr', 'loss'],
    'predictions': ['sequence', 'step', 'actual', 'predicted'],
    'metrics': ['variant', 'rmse', 'mae', 'r2', 'cc'],
}


def detect_csv_kind(columns) -> str:
    columns = list(columns)
    for kind, required in CSV_KINDS.items():
        if columns[:len(required)] == required:
            return kind
    raise FormatError(f"Unrecognized CSV header: {','.join(columns)}")


def _plot_loss(frame: pd.DataFrame, ax):
    ax.plot(frame['epoch'], frame['loss'], color='tab:blue', label='train loss')
    ax.set_xlabel('epoch')
    ax.set_ylabel('MSE loss')
    ax.set_yscale('log' if (frame['loss'] > 0).all() else 'linear')
    lr_ax = ax.twinx()
    lr_ax.plot(frame['epoch'], frame['lr'], color='tab:gray', linestyle='--', linewidth=0.8, label='lr')
    lr_ax.set_ylabel('learning rate')
    ax.set_title('Training loss')


def _plot_predictions(frame: pd.DataFrame, ax):
    frame = frame.sort_values(['sequence', 'step'], kind='stable').reset_index(drop=True)
    ax.plot(frame.index, frame['actual'], color='black', linewidth=1.0, label='actual')
    ax.plot(frame.index, frame['predicted'], color='tab:red', linewidth=1.0, label='predicted')
    for boundary in frame.index[frame['step'] == frame['step'].min()][1:]:
        ax.axvline(boundary - 0.5, color='lightgray', linewidth=0.5)
    ax.set_xlabel('sequence step')
    ax.set_ylabel('precipitation rate (mm/hr)')
    ax.set_title('Predicted vs actual')
    ax.legend(loc='upper right')


def _plot_metrics(frame: pd.DataFrame, ax):
    ax.bar(frame['variant'].astype(str), frame['rmse'], color='tab:blue', label='RMSE')
    ax.bar(frame['variant'].astype(str), frame['mae'], color='tab:orange', width=0.4, label='MAE')
    ax.set_ylabel('mm/hr')
    ax.set_title('Error by model')
    ax.legend(loc='upper right')


_PLOTTERS = {'loss': _plot_loss, 'predictions': _plot_predictions, 'metrics': _plot_metrics}


def plot_csv(csv_path: Union[str, Path], out_path: Union[str, Path]) -> str:
    """Render a loss, predictions or metrics CSV as a static SVG chart."""
    frame = pd.read_csv(csv_path)
    if frame.empty:
        raise FormatError("CSV has no rows to plot", path=csv_path)
    try:
        kind = detect_csv_kind(frame.columns)
    except FormatError as e:
        raise e.with_context(csv_path)

    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 4))
    try:
        _PLOTTERS[kind](frame, ax)
        fig.tight_layout()
        fig.savefig(out, format='svg', metadata=_SVG_METADATA)
    finally:
        plt.close(fig)

    logger.info(f"Wrote {kind} chart to {out}")
    return str(out)
