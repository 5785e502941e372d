import numpy as np
import pytest

from bhacs.acs import J0, constant_field
from bhacs.config import ConfigError, RunConfig, build_seed
from bhacs.geometry import MetricField
from bhacs.snapshot import MAGIC, SnapshotFormatError, parse_metric_spec, read_snapshot, write_snapshot
from bhacs.topology import perturbation_seed
from bhacs.geometry import Grid


class TestSnapshot:
    def test_round_trip_with_summary(self, tmp_path):
        J = perturbation_seed(Grid(8), eps=0.2).values
        path = tmp_path / "a.bhacs"
        written = write_snapshot(path, J, meta={"k": 1})
        snap = read_snapshot(path)
        assert snap.J.tobytes() == J.tobytes()
        assert snap.e2 == written.e2 > 0 and snap.meta["k"] == 1 and snap.metric_spec == "flat"
        assert snap.n == 8 and snap.grid.n == 8 and snap.periods.shape == (6,)

    def test_curved_metric_spec(self, tmp_path):
        m = MetricField(np.diag([1.0, 2.0, 1.0, 1.0]))
        J = perturbation_seed(Grid(8), eps=0.2, metric=m).values
        write_snapshot(tmp_path / "b.bhacs", J, m)
        snap = read_snapshot(tmp_path / "b.bhacs")
        assert np.allclose(parse_metric_spec(snap.metric_spec).g, m.g)
        assert np.all(np.isnan(snap.periods))

    def test_layout(self, tmp_path):
        J = constant_field(J0, 8)
        path = tmp_path / "c.bhacs"
        write_snapshot(path, J)
        data = path.read_bytes()
        assert data.startswith(MAGIC)
        payload = np.frombuffer(data[-8**4 * 16 * 8:], dtype="<f8")
        assert np.array_equal(payload[:16], J0.ravel())

    @pytest.mark.parametrize("cut", [3, 12, 40, -8])
    def test_truncated(self, tmp_path, cut):
        path = tmp_path / "d.bhacs"
        write_snapshot(path, constant_field(J0, 8))
        data = path.read_bytes()
        path.write_bytes(data[:cut])
        with pytest.raises(SnapshotFormatError):
            read_snapshot(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.bhacs"
        path.write_bytes(b"NOTBHACS" * 10)
        with pytest.raises(SnapshotFormatError, match="magic"):
            read_snapshot(path)

    def test_shape_checked(self, tmp_path):
        with pytest.raises(ValueError):
            write_snapshot(tmp_path / "f.bhacs", np.zeros((8, 8, 8, 8, 3, 3)))

    def test_metric_specs(self):
        assert parse_metric_spec("flat").is_flat
        assert np.allclose(parse_metric_spec("1,2,3,4").g, np.diag([1, 2, 3, 4]))
        assert parse_metric_spec(",".join(["1" if i % 5 == 0 else "0" for i in range(16)])).is_flat
        for bad in ("1,2", "a,b,c,d"):
            with pytest.raises(ValueError):
                parse_metric_spec(bad)


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = RunConfig()
        assert RunConfig.from_text(cfg.to_text()) == cfg

    def test_parse(self):
        cfg = RunConfig.from_text("""
            # comment
            n = 8
            seed = sphere_map   # trailing comment
            degrees = 1,0,0,0,0,0
            radii = 0.25; 0.375
            initial_step = auto
            grad_tol = 1e-6
        """)
        assert cfg.n == 8 and cfg.degrees == (1, 0, 0, 0, 0, 0) and cfg.radii == (0.25, 0.375)
        assert cfg.initial_step is None and cfg.optimizer().grad_tol == 1e-6
        assert cfg.center() == (4, 4, 4, 4)

    @pytest.mark.parametrize("text, match", [
        ("n = 8\nbogus = 1", r"<config>:2: unknown key 'bogus'"),
        ("n = 8\nn = 16", "duplicate key"),
        ("n 8", "expected 'key = value'"),
        ("n = eight", "bad value for 'n'"),
        ("n = 4", "n must be at least 8"),
        ("seed = random", "seed must be one of"),
        ("seed = file", "seed_file"),
        ("degrees = 1,2", "six integers"),
        ("armijo_c = 2", "armijo_c"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            RunConfig.from_text(text)

    def test_load_names_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("oops = 1\n")
        with pytest.raises(ConfigError, match="run.cfg:1"):
            RunConfig.load(path)

    def test_build_seeds(self, tmp_path):
        assert np.array_equal(build_seed(RunConfig(n=8, seed="constant")), constant_field(J0, 8))
        J = build_seed(RunConfig(n=8, seed="perturbation", eps=0.2))
        assert np.array_equal(J, perturbation_seed(Grid(8), eps=0.2).values)
        assert build_seed(RunConfig(n=8, seed="sphere_map", degrees=(1, 0, 0, 0, 0, 0))).shape == (8,) * 4 + (4, 4)
        path = tmp_path / "s.bhacs"
        write_snapshot(path, J)
        assert np.array_equal(build_seed(RunConfig(n=8, seed="file", seed_file=str(path))), J)
        with pytest.raises(ConfigError, match="n=8"):
            build_seed(RunConfig(n=16, seed="file", seed_file=str(path)))
