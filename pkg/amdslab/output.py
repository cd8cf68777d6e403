"""
This module writes the artefacts of a run (JSON, CSV, text tables) and draws the report figures.
"""

import contextlib
import json
import logging
import os
import tempfile

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

logger = logging.getLogger(__name__)

# Report table id to file stem, in presentation order.
REPORT_FILES = {
    "weights": "table1_weights",
    "two_stage": "table2_twostage",
    "cascade": "table3_cascade",
    "baselines": "table4_baselines",
    "ablation": "table5_ablation",
    "scaling": "table6_scaling",
    "adaptive": "table7_adaptive",
}


def report_stem(name: str) -> str:
    """File stem of a report table; unknown ids are used as they are."""
    return REPORT_FILES.get(name, name)


@contextlib.contextmanager
def atomic_target(filepath: str):
    """
    Yield a temporary path in the target directory and move it over ``filepath`` on success.
    """
    directory = os.path.dirname(os.path.abspath(filepath))
    os.makedirs(directory, exist_ok=True)
    handle, temp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(filepath))
    os.close(handle)
    try:
        yield temp_path
        os.replace(temp_path, filepath)
    finally:
        if os.path.exists(temp_path):
            os.remove(temp_path)


def to_builtin(value):
    """
    Convert numpy scalars and arrays (nested in dicts, lists and tuples) to JSON types.
    """
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def dumps(payload) -> str:
    return json.dumps(to_builtin(payload), sort_keys=True, indent=2) + "\n"


def write_text(text: str, filepath: str):
    """Write a text file atomically."""
    if not isinstance(filepath, str):
        raise TypeError("Filepath must be a string.")
    with atomic_target(filepath) as temp_path:
        with open(temp_path, "w", encoding="utf-8") as handle:
            handle.write(text)


def write_json(payload, filepath: str):
    """Write JSON with sorted keys atomically."""
    write_text(dumps(payload), filepath)


def read_json(filepath: str):
    with open(filepath, "r", encoding="utf-8") as handle:
        return json.load(handle)


def render_table(table: dict) -> str:
    """
    Render a table dictionary as aligned text: the title, the scalar columns of every row and
    any scalar summaries.
    """
    frame = pd.DataFrame(table["rows"], columns=table["columns"])
    lines = [table["title"], "=" * len(table["title"])]
    if frame.empty:
        lines.append("(no rows)")
    else:
        lines.append(
            frame.to_string(index=False, na_rep="n/a", float_format=lambda value: f"{value:.4f}")
        )
    summaries = {
        key: value
        for key, value in table.items()
        if key not in ("table", "title", "columns", "rows") and isinstance(value, (int, float, str))
    }
    if summaries:
        lines.append("")
        width = max(len(key) for key in summaries)
        for key, value in sorted(summaries.items()):
            shown = f"{value:.4f}" if isinstance(value, float) else str(value)
            lines.append(f"{key.ljust(width)}  {shown}")
    return "\n".join(lines) + "\n"


def write_table(table: dict, directory: str):
    """Write ``<stem>.json`` and the aligned ``<stem>.txt`` of a table to a directory."""
    stem = report_stem(table["table"])
    write_json(table, os.path.join(directory, f"{stem}.json"))
    write_text(render_table(table), os.path.join(directory, f"{stem}.txt"))


def plot_attack_accuracy(
    table: dict,
    systems: tuple = ("standard", "adversarial_training", "amds"),
    filepath: str = None,
    palette: str = "dark:skyblue",
):
    """
    Grouped barplot of the per-attack accuracy of several systems from the baseline table. The
    barplot can be saved to a file if a filepath is provided. Otherwise, it is displayed.

    Input:
        table (dict): The baseline table.
        systems (tuple): Systems to compare.
        filepath (str): The filepath to save the barplot to. Default is None.
        palette (str): The color palette to use for the plot. Default is 'dark:skyblue'.

    Raises:
        TypeError: If the filepath is not a string.
        ValueError: If a system is missing from the table.
    """
    if not isinstance(filepath, str) and filepath is not None:
        raise TypeError("Filepath must be a string.")
    per_attack = table["per_attack_accuracy"]
    missing = [system for system in systems if system not in per_attack]
    if missing:
        raise ValueError(f"Systems not in the table: {', '.join(missing)}.")
    plot_data = pd.DataFrame(
        [
            {"System": system, "Attack": kind, "Accuracy": value}
            for system in systems
            for kind, value in per_attack[system].items()
        ]
    )
    plt.figure(figsize=(10, 5))
    sns.barplot(x="Attack", y="Accuracy", hue="System", data=plot_data, palette=palette)
    plt.title("Accuracy under Attack")
    plt.ylim(0, 1)
    plt.tight_layout()
    if filepath is not None:
        plt.savefig(filepath)
        plt.close()
    else:
        plt.show()


def plot_weight_heatmap(table: dict, filepath: str = None):
    """
    Heatmap of the learned signal weights of every attack and category from the weights table.
    The heatmap can be saved to a file if a filepath is provided. Otherwise, it is displayed.

    Raises:
        TypeError: If the filepath is not a string.
    """
    if not isinstance(filepath, str) and filepath is not None:
        raise TypeError("Filepath must be a string.")
    frame = pd.DataFrame(table["rows"]).set_index("weights")[["alpha", "beta", "gamma"]]
    frame.columns = ["entropy", "disagreement", "anomaly"]
    plt.figure(figsize=(6, 8))
    sns.heatmap(frame, annot=True, fmt=".3f", cmap="coolwarm", vmin=0, vmax=1)
    plt.title("Learned Signal Weights")
    plt.tight_layout()
    if filepath is not None:
        plt.savefig(filepath)
        plt.close()
    else:
        plt.show()


def render_report(directory: str, figures: bool = True) -> list:
    """
    Re-render every table JSON in a report directory as text and draw the report figures.

    Returns:
        list: The table names found.

    Raises:
        FileNotFoundError: If the directory holds no table.
    """
    names = [
        name
        for name, stem in REPORT_FILES.items()
        if os.path.isfile(os.path.join(directory, f"{stem}.json"))
    ]
    if not names:
        raise FileNotFoundError(f"No report tables in '{directory}'; run evaluate first.")
    for name in names:
        stem = report_stem(name)
        table = read_json(os.path.join(directory, f"{stem}.json"))
        write_text(render_table(table), os.path.join(directory, f"{stem}.txt"))
        if not figures:
            continue
        if name == "weights":
            plot_weight_heatmap(table, os.path.join(directory, "weight_heatmap.png"))
        elif name == "baselines":
            plot_attack_accuracy(table, filepath=os.path.join(directory, "attack_accuracy.png"))
    logger.info("Rendered %d tables in %s", len(names), directory)
    return names
