import os
import subprocess
import sys

import numpy as np

SCRIPT_PATH = os.path.join(os.path.dirname(__file__), '..', 'slipflow.py')

SMALL_DISK = """
[geometry]
kind = "disk"
n1 = 8
n2 = 8

[bc]
mode = "navier"
alpha = {alpha}

[solver]
poisson_method = "direct"
"""


def run_cli(command, args):
    result = subprocess.run(
        [sys.executable, SCRIPT_PATH] + ([command] if command else []) + args,
        capture_output=True,
        text=True
    )
    return result


def write_config(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_version():
    result = run_cli(None, ['--version'])
    assert result.returncode == 0
    assert "slipflow v" in result.stdout


def test_no_command_prints_help():
    result = run_cli(None, [])
    assert result.returncode == 0
    assert "simulate" in result.stdout and "identities" in result.stdout


def test_config_source_is_required():
    result = run_cli('korn', [])
    assert result.returncode == 2
    assert "--config" in result.stderr


def test_config_and_preset_are_exclusive(tmp_path):
    path = write_config(tmp_path, SMALL_DISK.format(alpha=1.0))
    result = run_cli('korn', ['--config', path, '--preset', 'disk-freeslip'])
    assert result.returncode == 2


def test_unknown_preset(tmp_path):
    result = run_cli('simulate', ['--preset', 'moon', '--out', str(tmp_path / 'run')])
    assert result.returncode == 2
    assert "Unknown preset" in result.stdout
    assert "Simulation Summary" in result.stdout
    assert not (tmp_path / 'run').exists()


def test_unknown_config_key(tmp_path):
    path = write_config(tmp_path, SMALL_DISK.format(alpha=1.0) + "mesh = 3\n")
    result = run_cli('eigens', ['--config', path, '--out', str(tmp_path / 'run')])
    assert result.returncode == 2
    assert "solver.mesh" in result.stdout


def test_korn_run(tmp_path):
    path = write_config(tmp_path, SMALL_DISK.format(alpha=1.0))
    out_dir = tmp_path / 'korn'
    result = run_cli('korn', ['--config', path, '--out', str(out_dir)])
    output = result.stdout

    # Assert key steps in the process
    assert "Run directory" in output
    assert "Korn constant at 8x8" in output
    assert "Korn constant at 16x16" in output

    # Assert summary and outputs
    assert "Korn Summary" in output
    assert "Duration" in output
    assert result.returncode in (0, 1)
    assert (out_dir / 'manifest.json').exists()
    assert (out_dir / 'korn.csv').exists()


def test_refuses_to_overwrite(tmp_path):
    path = write_config(tmp_path, SMALL_DISK.format(alpha=1.0))
    out_dir = str(tmp_path / 'korn')
    assert run_cli('korn', ['--config', path, '--out', out_dir]).returncode in (0, 1)
    result = run_cli('korn', ['--config', path, '--out', out_dir])
    assert result.returncode == 2
    assert "already exists" in result.stdout


def test_project_run(tmp_path):
    path = write_config(tmp_path, SMALL_DISK.format(alpha=0.0))
    field_path = str(tmp_path / 'cells.npz')
    s = (np.arange(8) + 0.5) / 8
    np.savez(field_path, u1=np.outer(s, np.ones(8)), u2=np.ones((8, 8)))
    out_dir = tmp_path / 'project'
    result = run_cli('project', ['--config', path, '--field', field_path, '--out', str(out_dir)])
    output = result.stdout

    assert "Field loaded" in output
    assert "Projection done" in output
    assert "Outputs written" in output
    assert "Projection Summary" in output and "Success" in output
    assert result.returncode == 0
    for name in ('projection.csv', 'projected.npz', 'potential.npz', 'projected.vtk'):
        assert (out_dir / name).exists()


def test_project_without_field(tmp_path):
    path = write_config(tmp_path, SMALL_DISK.format(alpha=0.0))
    result = run_cli('project', ['--config', path, '--out', str(tmp_path / 'project')])
    assert "No field file given" in result.stdout
    assert result.returncode == 1


def test_simulate_run(tmp_path):
    text = SMALL_DISK.format(alpha=1.0) + "\n[run]\ndt = 0.002\nt_end = 0.02\namplitude = 0.2\nadvection = false\n"
    path = write_config(tmp_path, text)
    out_dir = tmp_path / 'simulate'
    result = run_cli('simulate', ['--config', path, '--out', str(out_dir), '--seed', '3'])
    output = result.stdout

    assert "Operator assembled" in output
    assert "Equilibrium basis ready" in output
    assert "Integration finished" in output
    assert "Simulation Summary" in output and "Success" in output
    assert result.returncode == 0
    assert (out_dir / 'diagnostics.csv').exists()
    assert (out_dir / 'final_field.npz').exists()
    assert (out_dir / 'geometry.csv').exists()


def test_eigens_run(tmp_path):
    path = write_config(tmp_path, SMALL_DISK.format(alpha=0.0) + "\n[run]\neigen_count = 4\n")
    out_dir = tmp_path / 'eigens'
    result = run_cli('eigens', ['--config', path, '--out', str(out_dir)])
    output = result.stdout

    assert "Eigenpairs computed" in output
    assert "Kernel checked" in output
    assert "Spectrum Summary" in output
    assert (out_dir / 'eigenvalues.csv').exists()
    assert (out_dir / 'eigenfields' / 'eigen_00.vtk').exists()
    assert (out_dir / 'kernel' / 'killing_00.vtk').exists()


def test_identities_run(tmp_path):
    text = SMALL_DISK.format(alpha=0.0).replace("n1 = 8\nn2 = 8", "n1 = 16\nn2 = 16")
    text += '\n[run]\nsamples = 1\ngeometries = ["cylinder"]\n'
    path = write_config(tmp_path, text)
    out_dir = tmp_path / 'identities'
    result = run_cli('identities', ['--config', path, '--out', str(out_dir)])
    output = result.stdout

    assert "Convergence identities evaluated on cylinder" in output
    assert "Helmholtz checks evaluated on cylinder" in output
    assert "Identity Battery Summary" in output
    assert result.returncode in (0, 1)
    assert (out_dir / 'identities.csv').exists()
