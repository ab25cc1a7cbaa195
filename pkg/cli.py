# cli.py
"""
Command-line front end of the spin-decoherence simulator.

    python cli.py state    --config assets/tce.json --script builtin:prep
    python cli.py scan     --config assets/tce.json --out out --jobs 4
    python cli.py spectrum --config assets/tce.json --t 0.0035
    python cli.py verify   --config assets/tce.json

Exit codes: 0 ok, 1 config error, 2 script error, 3 runtime error, 4 verification failure.
Errors print a single "error[<code>]: <message>" line on stderr.
"""
import sys

import click

from controller.experiment_controller import ExperimentController
from entity.spectral import SPECTRUM_MODES


def _status(symbol: str, message: str):
    click.echo(f"{symbol} {message}", err=True)


def _finish(payload: dict, code: int):
    if code != 0:
        click.echo(f"error[{code}]: {payload.get('error', 'unknown error')}", err=True)
    sys.exit(code)


config_option = click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                             help='Experiment config (JSON). Defaults to the bundled TCE config.')
out_option = click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                          help='Output directory (config paths.output_dir, then ./out).')
mode_option = click.option('--mode', type=click.Choice(SPECTRUM_MODES), default=None,
                           help='Spectrum mode: signed real part or magnitude.')
window_option = click.option('--window', default=None, metavar='LO_HZ:HI_HZ',
                             help='Peak window in Hz (default: higher-frequency line of the spin-1 doublet).')


@click.group()
def cli():
    """Exact density-matrix simulation of a two-spin system decohering through zz couplings."""


@cli.command()
@config_option
@click.option('--script', 'script_path', default=None,
              help="Sequence script file or builtin:<prep|entangle|readout>.")
@out_option
def state(config_path, script_path, out_dir):
    """Run a script from equilibrium and print the final deviation matrix."""
    controller = ExperimentController()
    payload, code = controller.state(config_path, script_path=script_path, out_dir=out_dir)
    if code == 0:
        click.echo(payload['text'], nl=False)
        for path in payload.get('files', []):
            _status('✓', f"wrote {path}")
    _finish(payload, code)


@cli.command()
@config_option
@out_option
@click.option('--jobs', type=click.IntRange(min=1), default=None, help='Worker threads for scan points.')
@mode_option
@window_option
def scan(config_path, out_dir, jobs, mode, window):
    """Peak amplitude versus evolution time, with a cosine fit."""
    controller = ExperimentController()
    payload, code = controller.scan(config_path, out_dir=out_dir, jobs=jobs, mode=mode, window=window,
                                    progress=True)
    if code == 0:
        data = payload['data']
        fit = data['fit']
        if fit:
            click.echo(f"A = {fit['A']:.6g}  T = {fit['T_ms']:.6g} ms  rms = {fit['rms_residual']:.3g}")
        if data['theory_period_s'] is not None:
            click.echo(f"theory T = 2/(J13+J23) = {data['theory_period_s'] * 1e3:.6g} ms")
        click.echo(f"max |corner coherence + envelope| = {data['max_envelope_error']:.3g}")
        for line in data['info']:
            click.echo(f"info: {line}")
        for warning in data['warnings']:
            _status('⚠', warning)
        for path in payload.get('files', []):
            _status('✓', f"wrote {path}")
    _finish(payload, code)


@cli.command()
@config_option
@click.option('--t', 't_seconds', type=float, required=True, help='Refocused evolution time in seconds.')
@out_option
@mode_option
@window_option
def spectrum(config_path, t_seconds, out_dir, mode, window):
    """Spectrum after the readout pulse at evolution time t."""
    controller = ExperimentController()
    payload, code = controller.spectrum(config_path, t=t_seconds, out_dir=out_dir, mode=mode, window=window)
    if code == 0:
        data = payload['data']
        click.echo(f"t = {t_seconds:g} s, {len(data['freq_hz'])} bins, mode {data['mode']}")
        for path in payload.get('files', []):
            _status('✓', f"wrote {path}")
    _finish(payload, code)


@cli.command()
@config_option
def verify(config_path):
    """Run the property suite (echo, trace, multi-environment and oracle checks)."""
    controller = ExperimentController()

    def report(check):
        click.echo(f"{'✓' if check.passed else '✗'} {check.name}: {check.detail}")

    payload, code = controller.verify(config_path, progress=report)
    if code == 0:
        click.echo(f"all {len(payload['data']['checks'])} checks passed")
    _finish(payload, code)


if __name__ == '__main__':
    cli()
