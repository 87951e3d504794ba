import contextlib
import json
import logging
import pathlib
import typing as t

import attrs
import click
import matplotlib
from matplotlib.figure import Figure

from . import __version__
from . import scenario as scenario_file
from .casestudies import CASE_STUDIES, CaseStudyOutput, run_case_study
from .core import MarkovOU, Scenario, validate_scenario
from .equilibrium import equilibrium_attack_probability
from .exceptions import EsdpError, ParseError
from .montecarlo import SimConfig, rollout_policy, simulate_commit_attack
from .stopping import (
    SCHEMES,
    GridSpec,
    boundary_frame,
    check_threshold_structure,
    extract_decision_boundary,
    initial_security_verdict,
    security_tolerance,
    solve,
)
from .thresholds import esdp


EXIT_IO = 1
EXIT_INVALID = 2
EXIT_INSECURE = 3

SVG_SALT = 'esdp'


def _fmt(value: t.Optional[float]) -> str:
    return 'n/a' if value is None else f'{value:.6g}'


@contextlib.contextmanager
def _handle_errors():
    """Map library errors to the exit code contract."""
    try:
        yield
    except (ParseError, OSError) as e:
        click.secho(str(e), fg='red', err=True)
        raise click.exceptions.Exit(EXIT_IO) from e
    except EsdpError as e:
        click.secho(str(e), fg='red', err=True)
        raise click.exceptions.Exit(EXIT_INVALID) from e


def _verdict(secure: bool) -> None:
    if secure:
        click.secho('SECURE', fg='green', bold=True)
    else:
        click.secho('INSECURE', fg='red', bold=True)


@attrs.define
class RunManifest:
    """Everything needed to reproduce the outputs of one command."""

    subcommand: str
    scenario: t.Optional[str] = None
    configs: dict[str, t.Any] = attrs.field(factory=dict)
    seed: t.Optional[int] = None
    version: str = __version__
    outputs: list[str] = attrs.field(factory=list)

    def add_output(self, path: pathlib.Path) -> pathlib.Path:
        self.outputs.append(path.name)
        return path

    def write(self, directory: pathlib.Path) -> pathlib.Path:
        path = directory / 'manifest.json'
        path.write_text(json.dumps(attrs.asdict(self), indent=2) + '\n', encoding='utf-8')
        return path


def _output_dir(out: t.Optional[pathlib.Path]) -> t.Optional[pathlib.Path]:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    return out


def render_svg(output: CaseStudyOutput, path: pathlib.Path) -> None:
    """Line plot of every series sharing the first series' unit."""
    columns = output.to_frame()
    x_column = output.columns[0]
    unit = output.series[0].unit

    fig = Figure(figsize=(7, 4.5))
    ax = fig.add_subplot()
    for column in output.series:
        if column.unit == unit:
            ax.plot(columns[x_column.header], columns[column.header],
                    marker='o' if output.log_x else None, label=column.header)
    if output.log_x:
        ax.set_xscale('log', base=2)
    ax.axhline(0.0, color='grey', linewidth=0.8)
    ax.set_title(output.title)
    ax.set_xlabel(x_column.header)
    ax.set_ylabel(unit)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()

    with matplotlib.rc_context({'svg.hashsalt': SVG_SALT}):
        fig.savefig(path, format='svg', metadata={'Date': None})


class CaseStudyId(click.ParamType):
    name = 'id'

    def convert(self, value, param, ctx):
        try:
            number = int(value)
        except (TypeError, ValueError):
            self.fail(f'{value!r} is not an integer')
        if number not in CASE_STUDIES:
            self.fail(f'unknown case study {number}, expected one of'
                      f' {", ".join(map(str, CASE_STUDIES))}')
        return number


scenario_argument = click.argument(
    'scenario_path',
    metavar='SCENARIO',
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
)

out_option = click.option(
    '-o', '--out',
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    envvar='ESDP_OUTPUT_DIR',
    default=None,
    help='Directory for output files and the run manifest.',
)


@click.group(
    context_settings=dict(
        help_option_names=['-h', '--help'],
        auto_envvar_prefix='ESDP',
    ),
)
@click.version_option(package_name='esdp')
@click.option(
    '-v', '--verbose',
    count=True,
    help='Log progress to stderr, repeat for debug output.',
)
def main(verbose):
    """Economically secure delay parameters for VDF-based randomness beacons."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


@main.command()
@scenario_argument
@click.option(
    '-d', '--delay',
    type=float,
    default=None,
    help='Evaluate a candidate delay in seconds and print a verdict.',
)
@click.option(
    '--json', 'as_json',
    is_flag=True,
    default=False,
    help='Print the JSON report instead of the table.',
)
@out_option
@_handle_errors()
def threshold(scenario_path, delay, as_json, out):
    """
    Required delay per security condition and the binding one.

    Prints a table, or the JSON report with --json. With --out the JSON report
    is always written to threshold.json.
    """
    scenario = scenario_file.load(scenario_path)
    report = esdp(scenario, delay)

    if as_json:
        click.echo(json.dumps(report.to_dict(), indent=2))
    else:
        for name, required in report.requirements.items():
            mark = '*' if name == report.binding_condition else ' '
            click.echo(f'{mark} {name:<20} {_fmt(required):>12} s')
        click.secho(f'ESDP: {_fmt(report.esdp)} s ({report.binding_condition})', bold=True)
        click.echo(report.declaration())
        for note in report.notes:
            click.echo(f'  - {note}')

    out = _output_dir(out)
    if out is not None:
        manifest = RunManifest('threshold', scenario_file.dumps(scenario),
                               configs={'delay': delay})
        path = manifest.add_output(out / 'threshold.json')
        path.write_text(json.dumps(report.to_dict(), indent=2) + '\n', encoding='utf-8')
        manifest.write(out)

    if report.secure is not None:
        _verdict(report.secure)
        if not report.secure:
            raise click.exceptions.Exit(EXIT_INSECURE)


@main.command()
@scenario_argument
@click.option(
    '-n', '--players',
    type=int,
    default=None,
    help='Number of symmetric players, defaults to the scenario.',
)
@click.option(
    '-d', '--delay',
    type=float,
    default=None,
    help='Delay in seconds, defaults to the honest delay of the scenario.',
)
@out_option
@_handle_errors()
def equilibrium(scenario_path, players, delay, out):
    """Symmetric mixed-strategy equilibrium among competing attackers."""
    scenario = scenario_file.load(scenario_path)
    if players is not None:
        scenario = scenario.replace(players=players)
    if delay is not None:
        scenario = scenario.with_env(honest_delay=delay)
    validate_scenario(scenario)

    env = scenario.env
    result = equilibrium_attack_probability(
        scenario.players, scenario.reward.mean, env.cost_rate, env.honest_delay,
        env.speedup,
    )
    click.echo(f'regime:               {result.regime}')
    click.echo(f'attack probability:   {_fmt(result.attack_probability)}')
    click.echo(f'expected attackers:   {_fmt(result.expected_attackers)}')
    click.echo(f'profit per attacker:  {_fmt(result.per_attacker_profit)} USD')

    out = _output_dir(out)
    if out is not None:
        manifest = RunManifest('equilibrium', scenario_file.dumps(scenario))
        path = manifest.add_output(out / 'equilibrium.json')
        path.write_text(json.dumps(result.to_dict(), indent=2) + '\n', encoding='utf-8')
        manifest.write(out)


def _grid_options(func):
    for decorator in reversed([
        click.option('--dt', 'time_step', type=float, default=1.0, show_default=True,
                     help='Time step in seconds.'),
        click.option('--vpoints', 'reward_points', type=int, default=101,
                     show_default=True, help='Number of reward grid points.'),
        click.option('--vmax', 'reward_max', type=float, default=None,
                     help='Top of the reward grid in USD.'),
        click.option('--scheme', type=click.Choice(SCHEMES), default='cdf',
                     show_default=True, help='Reward transition scheme.'),
        click.option('--nodes', 'quadrature_nodes', type=int, default=7,
                     show_default=True, help='Gauss-Hermite nodes.'),
    ]):
        func = decorator(func)
    return func


@main.command('solve')
@scenario_argument
@click.option(
    '-d', '--delay',
    type=float,
    default=None,
    help='Delay in seconds, defaults to the honest delay of the scenario.',
)
@_grid_options
@out_option
@_handle_errors()
def solve_command(scenario_path, delay, time_step, reward_points, reward_max,
                  scheme, quadrature_nodes, out):
    """
    Solve the adversary's optimal stopping problem on a grid.

    Coarse reward grids overstate the value, raise --vpoints to confirm small
    margins.
    """
    scenario = scenario_file.load(scenario_path)
    if delay is not None:
        scenario = scenario.with_env(honest_delay=delay)
    grid = GridSpec(time_step, reward_points, reward_max, quadrature_nodes, scheme)

    value_grid, policy = solve(scenario, grid)
    value = value_grid.initial_value()
    tolerance = security_tolerance(scenario, grid)
    click.echo(f'J(T, v0, t0) = {_fmt(value)} USD (± {_fmt(tolerance)})')

    verdict = initial_security_verdict(value_grid)
    if verdict.flip_reward is not None:
        click.echo(f'verdict changes at initial reward {_fmt(verdict.flip_reward)} USD')

    structure = check_threshold_structure(policy)
    out = _output_dir(out)
    if out is not None:
        manifest = RunManifest('solve', scenario_file.dumps(scenario),
                               configs={'grid': attrs.asdict(grid)})
        value_grid.to_frame(policy).to_csv(
            manifest.add_output(out / 'value_grid.csv'),
            index=False, float_format='%.17g', lineterminator='\n',
        )
        if structure.ok:
            boundary_frame(policy, extract_decision_boundary(policy)).to_csv(
                manifest.add_output(out / 'boundary.csv'),
                index=False, float_format='%.17g', lineterminator='\n',
            )
        manifest.write(out)
    if not structure.ok:
        click.secho(f'policy is not monotone in the reward at {len(structure.violations)}'
                    ' states, no decision boundary', fg='yellow', err=True)

    secure = value <= tolerance
    _verdict(secure)
    if not secure:
        raise click.exceptions.Exit(EXIT_INSECURE)


@main.command()
@scenario_argument
@click.option(
    '-n', '--trials',
    type=int,
    default=100_000,
    show_default=True,
    help='Number of Monte Carlo trials.',
)
@click.option(
    '-s', '--seed',
    type=int,
    default=0,
    show_default=True,
    help='Master seed.',
)
@click.option(
    '-d', '--delay',
    type=float,
    default=None,
    help='Delay in seconds, defaults to the honest delay of the scenario.',
)
@click.option(
    '--confidence',
    type=float,
    default=0.99,
    show_default=True,
    help='Confidence level of the interval.',
)
@click.option(
    '-j', '--workers',
    type=int,
    default=1,
    show_default=True,
    help='Worker processes.',
)
@_grid_options
@out_option
@_handle_errors()
def simulate(scenario_path, trials, seed, delay, confidence, workers, time_step,
             reward_points, reward_max, scheme, quadrature_nodes, out):
    """
    Estimate the attacker's expected profit by simulation.

    Mean-reverting rewards follow the optimal policy solved on the grid,
    other models the commit strategy of always running the full evaluation.
    """
    scenario: Scenario = scenario_file.load(scenario_path)
    if delay is not None:
        scenario = scenario.with_env(honest_delay=delay)
    config = SimConfig(trials, time_step, seed, confidence, workers).validate()
    configs: dict[str, t.Any] = {'sim': attrs.asdict(config)}
    records = out is not None

    if isinstance(scenario.reward, MarkovOU):
        grid = GridSpec(time_step, reward_points, reward_max, quadrature_nodes, scheme)
        configs['grid'] = attrs.asdict(grid)
        _, policy = solve(scenario, grid)
        estimate = rollout_policy(policy, scenario, config, records=records)
    else:
        estimate = simulate_commit_attack(
            scenario, scenario.env.honest_delay, config, records=records,
        )

    low, high = estimate.confidence_interval
    click.echo(f'mean profit:          {_fmt(estimate.mean)} USD')
    click.echo(f'std error:            {_fmt(estimate.std_error)} USD')
    click.echo(f'{confidence:.0%} interval:         [{_fmt(low)}, {_fmt(high)}] USD')
    click.echo(f'positive profit:      {_fmt(estimate.positive_profit_fraction)}')

    out = _output_dir(out)
    if out is not None:
        manifest = RunManifest('simulate', scenario_file.dumps(scenario),
                               configs=configs, seed=seed)
        estimate.write_records(manifest.add_output(out / 'trials.csv'))
        path = manifest.add_output(out / 'estimate.json')
        path.write_text(json.dumps(estimate.to_dict(), indent=2) + '\n', encoding='utf-8')
        manifest.write(out)


@main.command()
@click.option(
    '-i', '--id', 'number',
    type=CaseStudyId(),
    required=True,
    help='Case study number.',
)
@click.option(
    '--svg',
    is_flag=True,
    default=False,
    help='Also render the table as an SVG line plot.',
)
@out_option
@_handle_errors()
def casestudy(number, svg, out):
    """Reproduce one of the published case studies."""
    if svg and out is None:
        raise click.UsageError('--svg needs an output directory, use --out')
    output = run_case_study(number)

    click.secho(output.title, bold=True)
    for headline in output.headlines:
        click.echo(f'  {headline}')
    for note in output.notes:
        click.echo(f'  - {note}')

    out = _output_dir(out)
    if out is None:
        click.echo(output.to_frame().to_string(
            index=False, float_format=lambda x: f'{x:.6g}',
        ))
        return

    manifest = RunManifest('casestudy', configs={'id': number})
    output.write_csv(manifest.add_output(out / f'{output.name}.csv'))
    manifest.add_output(out / f'{output.name}.json').write_text(
        output.to_json() + '\n', encoding='utf-8',
    )
    if svg:
        render_svg(output, manifest.add_output(out / f'{output.name}.svg'))
    manifest.write(out)
    click.echo(f'wrote {", ".join(manifest.outputs)} to {out}')


if __name__ == '__main__':
    main()
