import functools
import logging
import math

import click

from . import bounds
from .config import Config
from .curves import get_curve
from .database import get_scoped_session, init_db
from .exceptions import CapacityError, LadderCapacityError, PreconditionError
from .presets import PRESETS, SystemTemplate, parse_law, preset_from_spec_file
from .services.cache_service import CacheService
from .services.counter_service import CounterService
from .services.explab_service import VIOLATED, ExpLabService
from .services.geometry_service import GeometryService
from .services.sums_service import SumsService, phase_from_law
from .utils.formatters import format_count, format_exponent, ladder_rows, report_json, table, write_csv, \
    write_report
from .utils.validators import parse_exponent, parse_float_list, parse_int_list, parse_ladder, parse_pairs

logger = logging.getLogger(__name__)

EXIT_CAPACITY = 2
EXIT_PRECONDITION = 3
EXIT_VIOLATED = 4


class Run:
    """Per-invocation state shared by the commands."""

    def __init__(self, workers=None, cache_dir=None, budget=None, output=None, csv_path=None,
                 record=False):
        self.workers = workers or Config.WORKERS
        self.output = output
        self.csv_path = csv_path
        self.session = None
        if record:
            init_db()
            # worker threads each get their own session
            self.session = get_scoped_session()
        cache = CacheService(cache_dir, self.session) if cache_dir else None
        self.counter = CounterService(self.session, cache, self.workers, budget)
        self.explab = ExpLabService(self.counter, self.session, self.workers)

    def emit(self, command, payload, rows=None, headers=None, **metadata):
        payload = {"command": command, **payload}
        if self.output:
            write_report(self.output, payload, **metadata)
            if rows is not None:
                click.echo(table(rows, headers))
            click.echo(f"Report written to {self.output}")
        else:
            click.echo(report_json(payload), nl=False)
        if self.csv_path and rows is not None:
            write_csv(self.csv_path, headers, rows)

    def close(self):
        if self.session is not None:
            self.session.remove()


def run_options(f):
    options = [
        click.option("--workers", type=int, default=None, help="Worker threads."),
        click.option("--cache-dir", default=None, envvar="MVT_CACHE_DIR", help="Cache directory."),
        click.option("--budget", type=int, default=None, help="Memory budget in bytes."),
        click.option("--output", default=None, help="Write the JSON report here."),
        click.option("--csv", "csv_path", default=None, help="Write table rows as CSV here."),
        click.option("--record", is_flag=True, help="Persist results to the database."),
        click.option("--verbose", is_flag=True, help="Debug logging."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def system_options(f):
    options = [
        click.option("--preset", default=None, help=f"One of {', '.join(PRESETS)}."),
        click.option("--spec-file", default=None, help="key = value file with p and terms."),
        click.option("--p", "p", type=int, default=None, help="Moment order override."),
        click.option("--delta-exp", "delta_exp", default=None, help="delta = N^e."),
        click.option("--Delta-exp", "Delta_exp", default=None, help="Delta = N^e."),
        click.option("--Delta", "Delta", default=None, help='Delta as an expression, e.g. "delta*N".'),
        click.option("--lambda-exp", "lambda_exp", default=None, help="lambda = N^e."),
        click.option("--window-constant", type=float, default=None, help="c in |.| <= c*W."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def handle_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        logging.basicConfig(level=logging.DEBUG if kwargs.get("verbose") else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        try:
            return f(*args, **kwargs)
        except CapacityError as e:
            click.echo(f"Capacity error: {e}", err=True)
            if e.budget is not None:
                click.echo(f"  budget={e.budget} estimate={e.estimate}", err=True)
            ctx.exit(EXIT_CAPACITY)
        except PreconditionError as e:
            click.echo(ctx.get_usage(), err=True)
            click.echo(f"Error: {e}", err=True)
            ctx.exit(EXIT_PRECONDITION)
    return wrapper


def make_run(kwargs):
    return Run(kwargs.pop("workers"), kwargs.pop("cache_dir"), kwargs.pop("budget"), kwargs.pop("output"),
               kwargs.pop("csv_path"), kwargs.pop("record"))


def resolve_template(preset, spec_file, p, delta_exp, Delta_exp, Delta, lambda_exp, window_constant):
    if bool(preset) == bool(spec_file):
        raise PreconditionError("give exactly one of --preset or --spec-file")
    if spec_file:
        return SystemTemplate(preset_from_spec_file(spec_file), {}, window_constant, p)
    if Delta and Delta_exp:
        raise PreconditionError("give at most one of --Delta and --Delta-exp")
    overrides = {
        "delta": f"N^{parse_exponent(delta_exp)}" if delta_exp is not None else None,
        "Delta": Delta or (f"N^{parse_exponent(Delta_exp)}" if Delta_exp is not None else None),
        "lambda": f"N^{parse_exponent(lambda_exp)}" if lambda_exp is not None else None,
    }
    return SystemTemplate.build(preset, overrides, window_constant, p)


def template_payload(template):
    return {"template": template.name, "preset": template.preset.name,
            "citation": template.preset.citation, "claimed_exponent": template.claimed()}


@click.group()
def cli():
    """Mean-value theorem lab: exact counts, exponential sums, exponent fits."""
    pass


@cli.command()
def init():
    """Initialize database"""
    init_db()
    click.echo(f"Database ready at {Config.DATABASE_URL}")


@cli.command()
def presets():
    """List presets"""
    data = []
    for preset in PRESETS.values():
        claimed = preset.claimed(SystemTemplate.build(preset.name).laws) if preset.claimed else None
        data.append([preset.name, preset.p, ", ".join(f"{k}={v}" for k, v in preset.defaults.items()),
                     format_exponent(claimed), preset.citation])
    click.echo(table(data, ["Preset", "p", "Defaults", "Claimed", "Citation"]))


@cli.command()
@system_options
@click.option("--N", "N", type=int, required=True)
@click.option("--engine", type=click.Choice(["auto", "exact", "windowed", "brute"]), default="auto")
@run_options
@handle_errors
def count(N, engine, verbose, **kwargs):
    """Count solutions of one system"""
    run = make_run(kwargs)
    try:
        template = resolve_template(**kwargs)
        system = template.resolve(N)
        counter = run.counter
        method = {"auto": counter.count, "exact": counter.count_exact,
                  "windowed": counter.count_windowed, "brute": counter.brute_oracle}[engine]
        result = method(system)
        diagonal = result.diagonal
        if diagonal is None and system.symmetric:
            diagonal = counter.diagonal_count(system)
        payload = {**template_payload(template), "N": N, "params": template.params_at(N),
                   "count": result.count, "engine": result.engine, "diagonal": diagonal,
                   "enumerated_multisets": result.enumerated_multisets, "system": system.describe()}
        rows = [[N, result.engine, result.count, diagonal]]
        run.emit("count", payload, rows, ["N", "engine", "count", "diagonal"],
                 wall_time=result.wall_time, cached=result.cached)
    finally:
        run.close()


def _ladder(run, template, ladder, command, band=None):
    try:
        fit = run.explab.run_ladder(template, ladder)
    except LadderCapacityError as e:
        click.echo(f"Partial ladder: {[(p.N, p.count) for p in e.points]}", err=True)
        raise
    claimed = template.claimed()
    verdicts = [run.explab.check_bound(fit, claimed, band)] if claimed is not None else []
    run.explab.save_run(template, fit, verdicts[0] if verdicts else None)
    payload = {**template_payload(template), **run.explab.report(template, fit, verdicts),
               "systems": {str(N): template.resolve(N).describe() for N in ladder}}
    run.emit(command, payload, ladder_rows(fit), ["N", "log2 N", "count", "log2 count"])
    click.echo(f"slope={fit.slope:.4f} residual={fit.max_residual:.3g}"
               + (f" verdict={verdicts[0].verdict}" if verdicts else ""), err=True)
    if verdicts and verdicts[0].verdict == VIOLATED:
        click.get_current_context().exit(EXIT_VIOLATED)


@cli.command()
@system_options
@click.option("--ladder", default=None, help="Comma-separated N values.")
@run_options
@handle_errors
def ladder(ladder, verbose, **kwargs):
    """Fit the growth exponent over an N-ladder"""
    run = make_run(kwargs)
    try:
        template = resolve_template(**kwargs)
        values = parse_ladder(ladder) if ladder else template.preset.default_ladder()
        _ladder(run, template, values, "ladder")
    finally:
        run.close()


@cli.command()
@click.option("--N", "N", type=int, default=None)
@click.option("--ladder", default=None, help="Comma-separated N values.")
@click.option("--window-constant", type=float, default=None)
@run_options
@handle_errors
def bilinear(N, ladder, window_constant, verbose, **kwargs):
    """Bilinear count over separated intervals"""
    run = make_run(kwargs)
    try:
        template = SystemTemplate.build("bilinear-n3", window_constant=window_constant)
        if ladder or N is None:
            values = parse_ladder(ladder) if ladder else template.preset.default_ladder()
            _ladder(run, template, values, "bilinear", band=(Config.BAND_LOW, 0.5))
            return
        system = template.resolve(N)
        result = run.counter.count_bilinear(system)
        payload = {**template_payload(template), "N": N, "count": result.count, "system": system.describe(),
                   "diagonal_term": bounds.bilinear_contribution(N)}
        run.emit("bilinear", payload, [[N, result.count]], ["N", "count"], wall_time=result.wall_time)
    finally:
        run.close()


@cli.command()
@click.option("--N", "N", type=int, required=True)
@click.option("--pairs", required=True, help="a/q pairs, e.g. 1/1021,5/65537.")
@click.option("--k", type=int, default=8)
@click.option("--sigma", default="sigma-3-256", help=f"Rational or one of {', '.join(Config.WEYL_SIGMAS)}.")
@run_options
@handle_errors
def weyl(N, pairs, k, sigma, verbose, **kwargs):
    """Weyl sums against the (N^4/q + 1 + q/N^4)^(1/160) bound"""
    run = make_run(kwargs)
    sums = SumsService(run.workers)
    scan = sums.weyl_scan(N, parse_pairs(pairs), sigma, k)
    rows = [[r["a"], r["q"], r["abs_sum"], r["rhs"], r["ratio"]] for r in scan]
    run.emit("weyl", {"N": N, "k": k, "sigma": str(sums.resolve_sigma(sigma)), "rows": scan},
             rows, ["a", "q", "|f|", "rhs", "ratio"])


@cli.command()
@click.option("--N", "N", type=int, required=True)
@click.option("--D", "Ds", required=True, help="Comma-separated interval lengths.")
@click.option("--power", default="3/2")
@click.option("--amplitude-exp", default="1", help="Phase N^e * g(n).")
@click.option("--normalized/--unnormalized", default=True)
@run_options
@handle_errors
def vdc(N, Ds, power, amplitude_exp, normalized, verbose, **kwargs):
    """Partition sums against the van der Corput bounds"""
    run = make_run(kwargs)
    phase = phase_from_law(power, parse_exponent(amplitude_exp), normalized)
    reports = SumsService(run.workers).vdc_scan(phase, N, parse_int_list(Ds))
    rows = [[r.D, r.intervals, r.partition_sum, r.short_block_bound, r.long_block_bound, r.ratio] for r in reports]
    run.emit("vdc", {"N": N, "phase": str(phase.term), "rows": [r.to_dict() for r in reports]},
             rows, ["D", "intervals", "sum", "short bound", "long bound", "ratio"])


def _param(text, N, known=None):
    return parse_law(text, known).value(N)


@cli.command()
@click.option("--N", "N", type=int, required=True)
@click.option("--delta-exp", "delta_exp", required=True)
@click.option("--Delta", "Delta", default="0.75*delta*N", help="Expression in delta and N.")
@click.option("--T", "T", type=float, default=2.0)
@click.option("--C", "C", type=float, default=1.0)
@click.option("--window-constant", type=float, default=None)
@run_options
@handle_errors
def interchange(N, delta_exp, Delta, T, C, window_constant, verbose, **kwargs):
    """Interchange inequality N_10(delta, Delta) vs coarser and narrower counts"""
    run = make_run(kwargs)
    try:
        delta_law = parse_law(f"N^{parse_exponent(delta_exp)}")
        report = run.explab.interchange_check(N, delta_law.value(N), _param(Delta, N, {"delta": delta_law}),
                                              T, C, window_constant)
        rows = [[report["count"], report["count_coarse"], report["count_narrow"], report["ratio"]]]
        run.emit("interchange", report, rows, ["N_10(d,D)", "N_10(T^2 d,T D)", "N_10(d,CTd)", "ratio"])
    finally:
        run.close()


@cli.command()
@click.option("--N", "N", type=int, required=True)
@click.option("--delta-exp", "delta_exp", required=True)
@click.option("--Delta-exp", "Delta_exp", required=True)
@click.option("--constant", type=float, default=None)
@click.option("--window-constant", type=float, default=None)
@run_options
@handle_errors
def lowerbound(N, delta_exp, Delta_exp, constant, window_constant, verbose, **kwargs):
    """Lower-bound family on a window of length Delta^(1/4) N"""
    run = make_run(kwargs)
    try:
        delta = float(N) ** float(parse_exponent(delta_exp))
        Delta = float(N) ** float(parse_exponent(Delta_exp))
        report = run.explab.lower_bound_check(N, delta, Delta, constant, window_constant)
        rows = [[report["M"], report["restricted_count"], report["scaled_count"], report["lower_bound"],
                 report["full_count"], report["full_ratio"]]]
        run.emit("lowerbound", report, rows, ["M", "restricted", "scaled", "c*bound", "full", "full/bound"])
    finally:
        run.close()


@cli.command()
@click.option("--curve", "curve_name", required=True)
@click.option("--library", default=None, help="Curve library file.")
@click.option("--grid", type=int, default=16)
@click.option("--t", "points", default=None, help="Comma-separated t_j for the quadratic check.")
@click.option("--h", type=float, default=1e-4)
@click.option("--gaps", default=None, help="Comma-separated separations to sweep.")
@run_options
@handle_errors
def geom(curve_name, library, grid, points, h, gaps, verbose, **kwargs):
    """Wronskian and second fundamental form scan of a curve"""
    run = make_run(kwargs)
    service = GeometryService(run.workers)
    curve = get_curve(curve_name, library)
    report = service.nondegeneracy_scan(curve, grid)
    payload = {"curve": curve.name, "n": curve.n, "scan": report.to_dict()}
    if curve.n == 3:
        payload["identity"] = service.mean_value_identity_check(curve, report)
    if points:
        payload["quadratic_fit"] = service.quadratic_fit_check(curve, parse_float_list(points), h)
    if gaps:
        payload["separation"] = service.separation_sweep(curve, parse_float_list(gaps), grid)
    rows = [[curve.name, report.min_abs_wronskian, report.min_abs_detD1,
             min(report.min_abs_sff_coeffs), report.degenerate]]
    run.emit("geom", payload, rows, ["curve", "min|W|", "min|det D1|", "min|sff|", "degenerate"])


@cli.command("mc-check")
@system_options
@click.option("--N", "N", type=int, required=True)
@click.option("--samples", type=int, default=20000)
@click.option("--seed", type=int, default=0)
@run_options
@handle_errors
def mc_check(N, samples, seed, verbose, **kwargs):
    """Monte Carlo moment against the exact count"""
    run = make_run(kwargs)
    try:
        template = resolve_template(**kwargs)
        estimate = SumsService(run.workers).mc_moment(template.moment_spec(N), samples, seed)
        exact = run.counter.count(template.resolve(N)).count
        z = (estimate.mean - exact) / estimate.stderr if estimate.stderr else math.inf
        payload = {**template_payload(template), "N": N, "count": exact, "mc_mean": estimate.mean,
                   "mc_stderr": estimate.stderr, "samples": samples, "seed": seed, "z": z}
        run.emit("mc-check", payload, [[N, exact, estimate.mean, estimate.stderr, z]],
                 ["N", "count", "MC mean", "stderr", "z"])
        click.echo(f"{format_count(exact)} vs {estimate.mean:.6g} +- {estimate.stderr:.2g}", err=True)
    finally:
        run.close()


if __name__ == '__main__':
    cli()
