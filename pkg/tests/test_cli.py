import json

import pytest

from app import create_parser, main
from iganet.errors import ConfigError
from iganet.geometry import load_geometry
from iganet.reports import read_csv, read_provenance


@pytest.fixture
def workspace(tmp_path):
    return [
        "--threads", "2",
        "--set", f"paths.output_dir={tmp_path / 'out'}",
        "--set", f"paths.database={tmp_path / 'index.db'}",
        "--cache-dir", str(tmp_path / "cache"),
        "--set", "evaluation.points=20",
    ]


@pytest.fixture
def sphere_file(tmp_path, workspace):
    path = tmp_path / "sphere.json"
    assert main([*workspace, "geometry", "sphere", "--out", str(path)]) == 0
    return path


def test_parser_requires_command() -> None:
    with pytest.raises(ConfigError):
        create_parser().parse_args([])


def test_geometry_sphere(sphere_file) -> None:
    surface = load_geometry(sphere_file)
    assert surface.num_patches == 6
    assert json.loads(sphere_file.read_text())["metadata"]["kind"] == "sphere"


def test_geometry_spheroid_default_location(tmp_path, workspace) -> None:
    assert main([*workspace, "geometry", "spheroid", "--r-semi", "0.7"]) == 0
    assert (tmp_path / "out" / "spheroid.json").is_file()


@pytest.mark.parametrize(
    "argv",
    [
        ["geometry", "spheroid", "--r-semi", "wide"],
        ["geometry", "spheroid"],
        ["geometry", "torus"],
        ["geometry", "spheroid", "--r-semi", "1.5"],
        ["nosuchcommand"],
    ],
)
def test_usage_errors_exit_one(workspace, argv) -> None:
    assert main([*workspace, *argv]) == 1


def test_bad_override_exits_one(workspace) -> None:
    assert main([*workspace, "--set", "physics.kappa=fast", "geometry", "sphere"]) == 1


def test_missing_geometry_exits_three(tmp_path, workspace) -> None:
    assert main([*workspace, "solve", str(tmp_path / "absent.json")]) == 3


def test_malformed_geometry_exits_three(tmp_path, workspace) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main([*workspace, "solve", str(path)]) == 3


def test_solve_writes_solution_and_evaluation(tmp_path, workspace, sphere_file) -> None:
    out = tmp_path / "solution.json"
    assert main([*workspace, "--refinement", "0", "solve", str(sphere_file), "--out", str(out)]) == 0

    report = json.loads(out.read_text())
    assert report["num_dofs"] == 12
    assert len(report["j_re"]) == len(report["j_im"]) == 12
    assert report["delta_max"] > 0
    assert len(report["config_hash"]) == 16

    evaluation = tmp_path / "solution_evaluation.csv"
    assert read_provenance(evaluation)["config_hash"] == report["config_hash"]
    frame = read_csv(evaluation)
    assert len(frame) == 20
    assert frame["error"].max() == pytest.approx(report["delta_max"], rel=1e-12)


def test_solvers_agree(tmp_path, workspace, sphere_file) -> None:
    reports = {}
    for method in ("lu", "gmres"):
        out = tmp_path / f"{method}.json"
        argv = [*workspace, "--refinement", "0", "--solver", method, "solve", str(sphere_file), "--out", str(out)]
        assert main(argv) == 0
        reports[method] = json.loads(out.read_text())
    assert reports["gmres"]["solver"] == "gmres"
    assert reports["gmres"]["delta_max"] == pytest.approx(reports["lu"]["delta_max"], rel=1e-6)


def test_surface_current(tmp_path, workspace, sphere_file) -> None:
    argv = [*workspace, "--refinement", "0", "surface-current", str(sphere_file), "--samples", "2"]
    assert main(argv) == 0
    frame = read_csv(tmp_path / "out" / "surface_current.csv")
    assert len(frame) == 6 * 2 * 2
    assert (frame["abs_re"] >= 0).all()


def test_surface_current_model_mismatch(tmp_path, workspace, sphere_file) -> None:
    from iganet.neural import MlpSpec, init, save_model

    model_path = save_model(init(MlpSpec.for_problem(600, 7, (4,)), seed=0), tmp_path / "tiny.mlp")
    argv = [*workspace, "--refinement", "0", "surface-current", str(sphere_file), "--model", str(model_path)]
    assert main(argv) == 1
