import shlex
import sys
import textwrap

import pytest

from tcadloop.backend import BackendConfig, parse_iv_file, run, tail
from tcadloop.errors import BackendIOError, ConfigError, FatalBackendError, InvariantError, ParseError
from tcadloop.surrogate import Converged, NonConvergent, simulate_iv

STUB = textwrap.dedent(
    """
    import pathlib, sys, time

    step, deck, workdir = sys.argv[1], sys.argv[2], pathlib.Path(sys.argv[3])
    with open(workdir / "steps.log", "a") as log:
        log.write(f"{step} {pathlib.Path(deck).name}\\n")
    if step == "fail":
        sys.stderr.write("Newton iteration 40: error norm 3.1e+05\\nsolver diverged\\n")
        sys.exit(1)
    if step == "sleep":
        time.sleep(5)
    if step == "garbage":
        (workdir / "iv.csv").write_text("vg,id\\n0.0,abc\\n")
    if step == "device":
        (workdir / "iv.csv").write_text("vg,id\\n0.65,1e-4\\n0.0,1e-9\\n0.3,1e-6\\n")
    """
)


def _stub(tmp_path):
    script = tmp_path / "stub.py"
    script.write_text(STUB)
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(script))}"


def _external(tmp_path, structure, device, **kw):
    stub = _stub(tmp_path)
    return BackendConfig(
        kind="external",
        structure_command=f"{stub} {structure} {{deck}} {{workdir}}",
        device_command=f"{stub} {device} {{deck}} {{workdir}}",
        workdir=str(tmp_path / "work"),
        **kw,
    )


def test_surrogate_backend_delegates(r1, idvg):
    assert run(r1, idvg, BackendConfig()) == simulate_iv(r1, idvg)


def test_external_runs_structure_then_device(tmp_path, r1, idvg):
    cfg = _external(tmp_path, "structure", "device")
    outcome = run(r1, idvg, cfg, name="iter_3")
    assert isinstance(outcome, Converged)
    assert outcome.iv.vg == (0.0, 0.3, 0.65)
    assert outcome.iv.id == (1e-9, 1e-6, 1e-4)
    assert outcome.iv.vd == 0.65
    assert outcome.bands_on is None
    log = (tmp_path / "work" / "steps.log").read_text().splitlines()
    assert log == ["structure iter_3_dvs.cmd", "device iter_3_des.cmd"]


def test_combined_command_gets_deck_stem(tmp_path, r1, idvg):
    stub = _stub(tmp_path)
    cfg = BackendConfig(kind="external", command=f"{stub} device {{deck}} {{workdir}}", workdir=str(tmp_path / "work"))
    assert isinstance(run(r1, idvg, cfg), Converged)
    assert (tmp_path / "work" / "steps.log").read_text() == "device device\n"


def test_solver_failure_is_non_convergent(tmp_path, r1, idvg):
    outcome = run(r1, idvg, _external(tmp_path, "fail", "device"))
    assert isinstance(outcome, NonConvergent)
    assert "solver diverged" in outcome.diagnostic
    assert "structure exited with status 1" in outcome.diagnostic
    assert (tmp_path / "work" / "steps.log").read_text().splitlines() == ["fail device_dvs.cmd"]


def test_timeout_is_non_convergent(tmp_path, r1, idvg):
    outcome = run(r1, idvg, _external(tmp_path, "structure", "sleep", timeout_s=0.5))
    assert isinstance(outcome, NonConvergent)
    assert "timed out after 0.5 s" in outcome.diagnostic


def test_missing_or_garbled_output_is_non_convergent(tmp_path, r1, idvg):
    outcome = run(r1, idvg, _external(tmp_path, "structure", "quiet"))
    assert isinstance(outcome, NonConvergent)
    assert "no I-V output" in outcome.diagnostic

    outcome = run(r1, idvg, _external(tmp_path, "structure", "garbage"))
    assert isinstance(outcome, NonConvergent)
    assert "unparseable I-V output iv.csv" in outcome.diagnostic


def test_stale_output_is_not_reused(tmp_path, r1, idvg):
    assert isinstance(run(r1, idvg, _external(tmp_path, "structure", "device")), Converged)
    outcome = run(r1, idvg, _external(tmp_path, "structure", "quiet"))
    assert isinstance(outcome, NonConvergent)


def test_files_stay_inside_workdir(tmp_path, r1, idvg):
    run(r1, idvg, _external(tmp_path, "structure", "device"))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["stub.py", "work"]


def test_unstartable_command_is_fatal(tmp_path, r1, idvg):
    cfg = BackendConfig(
        kind="external",
        command="tcadloop-no-such-solver {deck} {workdir}",
        workdir=str(tmp_path / "work"),
    )
    with pytest.raises(FatalBackendError):
        run(r1, idvg, cfg)


def test_unusable_workdir_is_an_io_error(tmp_path, r1, idvg):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    cfg = BackendConfig(kind="external", command="true {deck} {workdir}", workdir=str(blocker))
    with pytest.raises(BackendIOError):
        run(r1, idvg, cfg)


def test_config_validation():
    with pytest.raises(ConfigError, match="needs a workdir"):
        BackendConfig(kind="external", command="run {deck} {workdir}")
    with pytest.raises(ConfigError, match="lacks placeholder"):
        BackendConfig(kind="external", command="run {deck}", workdir="w")
    with pytest.raises(ConfigError):
        BackendConfig(kind="external", structure_command="sde {deck} {workdir}", workdir="w")
    with pytest.raises(ConfigError):
        BackendConfig(timeout_s=0)
    with pytest.raises(ConfigError):
        BackendConfig(kind="cloud")
    with pytest.raises(ConfigError, match="unknown backend fields"):
        BackendConfig.from_dict({"kind": "surrogate", "license": "x"})
    cfg = BackendConfig.from_dict({"kind": "external", "command": "r {deck} {workdir}", "workdir": "w", "env": {"LM_LICENSE_FILE": 27000}})
    assert cfg.env == {"LM_LICENSE_FILE": "27000"}
    assert cfg.timeout_s == 3600.0


def test_parse_iv_file_basics():
    iv = parse_iv_file("vg,id\n0.0,1e-9\n0.65,1e-4\n", vd=0.65)
    assert iv.points == ((0.0, 1e-9), (0.65, 1e-4))
    assert iv.vd == 0.65

    iv = parse_iv_file("# from the solver\n0.65 1e-4\n0.0 1e-9\n0.3 1e-6\n", "tabular")
    assert iv.vg == (0.0, 0.3, 0.65)


def test_parse_iv_file_errors():
    with pytest.raises(InvariantError):
        parse_iv_file("vg,id\n0.0,0\n0.65,1e-4\n")
    with pytest.raises(InvariantError, match="duplicate vg"):
        parse_iv_file("0.0,1e-9\n0.0,2e-9\n0.65,1e-4\n")
    with pytest.raises(ParseError) as info:
        parse_iv_file("vg,id\n0.0,1e-9\n0.3,oops\n0.65,1e-4\n")
    assert info.value.line == 3
    with pytest.raises(ParseError):
        parse_iv_file("vg,id\n0.0,1e-9\n")
    with pytest.raises(ConfigError):
        parse_iv_file("0,1\n1,2\n", "xlsx")


def test_tail_keeps_last_lines():
    text = "\n".join(f"line {i:03d}" for i in range(120))
    kept = tail(text).splitlines()
    assert len(kept) == 50
    assert kept[0] == "line 070"
