'''
The comparison figure: MSE learning curves next to the phase angle gap of
one bus, for every algorithm in a `compare` CSV.
'''
import re
from pathlib import Path
from typing import Dict, List, Union

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

GAP_COLUMN = re.compile(r'^gap_bus_(\d+)_(\w+)$')


def comparison_columns(data: pd.DataFrame) -> Dict[str, List[str]]:
    '''
    Maps every algorithm with an `mse_<algorithm>` column to its
    `gap_bus_<k>_<algorithm>` columns.
    '''
    algorithms = [c[len('mse_'):] for c in data.columns if c.startswith('mse_')]
    if len(algorithms) == 0:
        raise ValueError('no mse_<algorithm> columns found')
    if 'iteration' not in data.columns:
        raise ValueError('no iteration column found')

    gaps = {a: [] for a in algorithms}
    for column in data.columns:
        match = GAP_COLUMN.match(column)
        if match is not None and match.group(2) in gaps:
            gaps[match.group(2)].append(column)
    return gaps


def plot_comparison(data: pd.DataFrame, out: Union[str, Path]) -> Path:
    '''
    Draws the comparison figure and saves it to `out`.
    '''
    columns = comparison_columns(data)

    sns.set(font_scale=1.25)
    fig, (ax_mse, ax_gap) = plt.subplots(1, 2, figsize=(15, 6))
    for algorithm, gap_columns in columns.items():
        with np.errstate(divide='ignore'):
            ax_mse.plot(data['iteration'], 10 * np.log10(data[f'mse_{algorithm}']), label=algorithm.upper())
        for column in gap_columns:
            ax_gap.plot(data['iteration'], data[column], label=algorithm.upper())

    ax_mse.set_xlabel('Iteration')
    ax_mse.set_ylabel('MSE (dB)')
    ax_mse.set_title('MSE performance')
    ax_mse.legend()

    buses = sorted({GAP_COLUMN.match(c).group(1) for cols in columns.values() for c in cols}, key=int)
    ax_gap.set_xlabel('Iteration')
    ax_gap.set_ylabel('Phase Angle Gap')
    ax_gap.set_title(f'Phase Angle Gap for bus {", ".join(buses)}' if buses else 'Phase Angle Gap')
    ax_gap.legend()

    out = Path(out)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return out
