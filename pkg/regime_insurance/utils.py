"""Utility functions and helpers."""

import warnings
from pathlib import Path

import nbformat
import numpy as np
from nbconvert.writers import FilesWriter
from sphinx.errors import ExtensionError


def format_number(value, digits: int = 10) -> str:
    """``digits`` significant digits, switching to scientific notation below ``1e-4``."""
    value = float(value)
    if value == 0:
        return "0"
    return format(value, f".{digits}g")


def format_row(values) -> str:
    cells = (format_number(v) if isinstance(v, (float, np.floating)) else str(v) for v in values)
    return ",".join(cells)


def blank_nb():
    return nbformat.v4.new_notebook(
        metadata={
            "kernelspec": {
                "display_name": "Python 3",
                "language": "python",
                "name": "python3",
            },
            "language_info": {"name": "python", "file_extension": ".py"},
        }
    )


def figures_notebook(tables):
    """Notebook that loads each ``(title, csv_name, x, ys)`` table and plots it with pandas."""
    notebook = blank_nb()
    cells = [
        nbformat.v4.new_markdown_cell(
            "# Regime insurance figures\n\nData written by `regime-insurance reproduce figures`."
        ),
        nbformat.v4.new_code_cell("import pandas as pd"),
    ]
    for title, csv_name, x, ys in tables:
        cells.append(nbformat.v4.new_markdown_cell(f"## {title}"))
        cells.append(
            nbformat.v4.new_code_cell(
                f"frame = pd.read_csv({csv_name!r})\n"
                f"frame.plot(x={x!r}, y={list(ys)!r}, title={title!r})"
            )
        )
    notebook.cells = cells
    return notebook


def write_notebook_output(notebook, output_dir, notebook_name):
    """Write ``notebook`` and its script export to ``output_dir``."""
    from nbconvert.exporters import ScriptExporter

    output_dir = Path(output_dir)
    try:
        FilesWriter(build_directory=str(output_dir)).write(
            nbformat.writes(notebook),
            {"outputs": {}},
            notebook_name + ".ipynb",
        )
        exporter = ScriptExporter()
        with warnings.catch_warnings():
            # See https://github.com/jupyter/nbconvert/issues/1388
            warnings.simplefilter("ignore", DeprecationWarning)
            contents, resources = exporter.from_notebook_node(notebook)
    except Exception as e:
        raise ExtensionError("Unable to export the figures notebook", orig_exc=e)

    # utf-8 is the de-facto standard encoding for notebooks.
    script = output_dir / (notebook_name + resources["output_extension"])
    script.write_text(contents, encoding="utf8")
    return output_dir / (notebook_name + ".ipynb"), script
