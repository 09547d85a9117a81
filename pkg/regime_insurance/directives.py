"""Sphinx directives that render solved models as docutils tables."""

from pathlib import Path

from docutils import nodes
from docutils.parsers.rst import Directive, directives

from .analysis import PUBLISHED_INSURED, reproduce_table1
from .config import load_config
from .errors import RegimeInsuranceError
from .utils import format_number


def float_option(argument):
    try:
        return float(directives.unchanged_required(argument))
    except ValueError:
        raise ValueError(f"expected a number, got {argument!r}")


def build_table(headers, rows, digits, classes):
    """A docutils table with one header row; floats get ``digits`` significant digits."""
    table = nodes.table(classes=classes)
    tgroup = nodes.tgroup(cols=len(headers))
    table += tgroup
    for _ in headers:
        tgroup += nodes.colspec(colwidth=1)

    def make_row(cells):
        row = nodes.row()
        for cell in cells:
            text = format_number(cell, digits) if isinstance(cell, float) else str(cell)
            entry = nodes.entry()
            entry += nodes.paragraph(text=text)
            row += entry
        return row

    thead = nodes.thead()
    thead += make_row(headers)
    tgroup += thead
    tbody = nodes.tbody()
    for cells in rows:
        tbody += make_row(cells)
    tgroup += tbody
    return table


class RegimeTable(Directive):
    """Render the published table of value gaps ``V - V_1`` at unit wealth.

    Options
    -------
    all-insured : bool
        If provided, insurance is open in both regimes instead of regime 1
        only.
    """

    required_arguments = 0
    optional_arguments = 0
    has_content = False

    option_spec = {
        "all-insured": directives.flag,
    }

    def run(self):
        # This only works lazily because the logger is inited by Sphinx
        from . import logger

        env = self.state.document.settings.env
        digits = env.config.regime_insurance_precision
        insured = (True, True) if "all-insured" in self.options else PUBLISHED_INSURED

        try:
            rows = reproduce_table1(insured=insured)
        except RegimeInsuranceError as err:
            return [self.state.document.reporter.error(str(err), line=self.lineno)]

        logger.debug(
            "[regime-insurance] rendered %d table rows",
            len(rows),
            location=self.state_machine.get_source_and_line(self.lineno),
        )
        cells = [(row.alpha, row.l, row.gap_regime1, row.gap_regime2) for row in rows]
        return [
            build_table(
                ["alpha", "l", "gap regime 1", "gap regime 2"],
                cells,
                digits,
                ["regime-table"],
            )
        ]


class RegimeValue(Directive):
    """Render the solved coefficients and policies for a JSON model file.

    Arguments:
    ---------
    filename : str
        Path to a model document. Relative paths resolve against
        ``regime_insurance_config_dir`` when it is set, and against the
        current document otherwise.

    Options
    -------
    constrained : bool
        If provided, solve the problem without insurance.
    delta : float
        If provided, replaces the discount rate of the model file.
    """

    required_arguments = 1
    optional_arguments = 0
    final_argument_whitespace = True
    has_content = False

    option_spec = {
        "constrained": directives.flag,
        "delta": float_option,
    }

    def config_path(self, env):
        config_dir = env.config.regime_insurance_config_dir
        if config_dir is None:
            rel_filename, filename = env.relfn2path(self.arguments[0])
        else:
            filename = str(Path(env.srcdir, config_dir, self.arguments[0]))
            rel_filename = str(Path(config_dir, self.arguments[0]))
        env.note_dependency(rel_filename)
        return filename

    def run(self):
        from . import logger
        from .policy import policy_bundle
        from .solvers import hjb_residual, solve

        env = self.state.document.settings.env
        digits = env.config.regime_insurance_precision
        constrained = "constrained" in self.options

        try:
            model, utility = load_config(self.config_path(env))
            if "delta" in self.options:
                model = model.with_delta(self.options["delta"])
            coeffs = solve(model, utility, constrained=constrained)
            bundle = policy_bundle(model, coeffs)
            residuals = hjb_residual(model, utility, coeffs, 1.0)
        except RegimeInsuranceError as err:
            logger.warning(
                "[regime-insurance] %s",
                err,
                location=self.state_machine.get_source_and_line(self.lineno),
            )
            return [self.state.document.reporter.error(str(err), line=self.lineno)]

        rows = [
            (
                i + 1,
                float(coeffs.values[i]),
                float(bundle.pi_star[i]),
                float(bundle.kappa[i]),
                float(bundle.nu[i]) if bundle.insured[i] else "-",
                float(residuals[i]),
            )
            for i in range(model.size)
        ]
        caption = nodes.paragraph(
            text=f"{utility.describe()}{', no insurance' if constrained else ''}",
            classes=["regime-caption"],
        )
        table = build_table(
            ["regime", "A", "pi*", "kappa", "nu", "HJB residual"],
            rows,
            digits,
            ["regime-value"],
        )
        return [caption, table]
