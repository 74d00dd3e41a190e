import pytest

from iganet.config import RunConfig, apply_overrides, load_config, parse_assignments
from iganet.errors import ConfigError


class TestDefaults:
    def test_values(self) -> None:
        config = load_config(environ={})
        assert config.physics.kappa == 2.0
        assert config.physics.dipole_position == (0.2, 0.2, 0.2)
        assert config.physics.dipole_moment == (0.0, 0.1, 0.1)
        assert config.discretization.degree == 1
        assert config.quadrature.singular_order == 8
        assert config.training.stop_epsilon == 2e-8
        assert config.convergence.levels == (1, 2, 3)
        assert config.solver.method == "lu"

    def test_get(self) -> None:
        assert RunConfig().get("network.hidden") == (50, 50)
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig().get("network.depth")


class TestHash:
    def test_stable_and_short(self) -> None:
        a, b = RunConfig().config_hash(), RunConfig().config_hash()
        assert a == b
        assert len(a) == 16
        int(a, 16)

    def test_ignores_runtime_and_paths(self) -> None:
        base = RunConfig()
        other = apply_overrides(base, {"runtime.threads": "3", "paths.output_dir": "elsewhere"})
        assert other.config_hash() == base.config_hash()

    def test_tracks_numerics(self) -> None:
        base = RunConfig()
        assert apply_overrides(base, {"physics.kappa": "3"}).config_hash() != base.config_hash()

    def test_provenance(self) -> None:
        provenance = RunConfig().provenance()
        assert set(provenance) == {"config_hash", "config"}
        assert provenance["config"] == RunConfig().to_dict()
        assert provenance["config"]["physics"]["dipole_moment"] == [0.0, 0.1, 0.1]

    def test_provenance_carries_runtime_outside_the_hash(self) -> None:
        base = RunConfig()
        other = apply_overrides(base, {"runtime.threads": "3"})
        assert other.provenance()["config"]["runtime"]["threads"] == 3
        assert other.provenance()["config_hash"] == base.provenance()["config_hash"]


class TestResolution:
    def test_file_environment_and_flags(self, tmp_path) -> None:
        path = tmp_path / "run.conf"
        path.write_text(
            "# study settings\n"
            "physics.kappa=3.5\n"
            "discretization.refinement=2\n"
            "network.hidden=20,30,40\n"
            "solver.method=gmres\n"
        )
        environ = {"IGANET_DISCRETIZATION_REFINEMENT": "3", "IGANET_TRAINING_SEED": "9"}
        config = load_config(path, {"training.seed": "11"}, environ=environ)
        assert config.physics.kappa == 3.5
        assert config.discretization.refinement == 3
        assert config.network.hidden == (20, 30, 40)
        assert config.solver.method == "gmres"
        assert config.training.seed == 11

    def test_tuple_of_floats(self) -> None:
        config = apply_overrides(RunConfig(), {"physics.dipole_position": "(0.1, -0.2, 0.3)"})
        assert config.physics.dipole_position == (0.1, -0.2, 0.3)

    def test_missing_file(self, tmp_path) -> None:
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.conf", environ={})

    @pytest.mark.parametrize(
        "overrides, message",
        [
            ({"physics.mass": "1"}, "unknown config key"),
            ({"nosection.kappa": "1"}, "unknown config key"),
            ({"physics.kappa": "fast"}, "cannot parse"),
            ({"solver.method": "qr"}, "solver.method"),
            ({"discretization.degree": "0"}, "degree"),
            ({"physics.dipole_position": "1,2"}, "three components"),
            ({"training.train_fraction": "1.5"}, "train_fraction"),
        ],
    )
    def test_invalid(self, overrides, message) -> None:
        with pytest.raises(ConfigError, match=message):
            load_config(overrides=overrides, environ={})

    def test_parse_assignments(self) -> None:
        assert parse_assignments(["a.b=1", " c.d = x "]) == {"a.b": "1", "c.d": "x"}
        with pytest.raises(ConfigError, match="key=value"):
            parse_assignments(["novalue"])
