import json

import pytest
import yaml

from gripset import cli, pipeline
from gripset.corpus import box_mesh, gen_synthetic_corpus
from gripset.dedup import grids_identical
from gripset.errors import ConfigError, InvariantError
from gripset.model_io import read_grid_set, read_manifest, write_obj
from gripset.stats import StatsReport, report_stats

SMALL = dict(samples_per_object=600, grasps_per_object=60)


def config(tmp_path, objects, out="out", **kw):
    return pipeline.PipelineConfig(objects=objects, output_dir=tmp_path / out, **{**SMALL, **kw})


@pytest.fixture
def cube_files(tmp_path):
    text = write_obj(box_mesh(0.05, 0.05, 0.05))
    paths = [tmp_path / "cube_a.obj", tmp_path / "cube_b.obj"]
    for p in paths:
        p.write_text(text)
    return paths


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return gen_synthetic_corpus("mixed", 3, 2, seed=5, out_dir=root)


def grid_bits(path):
    return {bits for _, bits in read_grid_set(path.read_bytes())[1]}


def test_identical_objects_collapse(tmp_path, cube_files):
    one = pipeline.run_pipeline(config(tmp_path, cube_files[:1], "one"))
    two = pipeline.run_pipeline(config(tmp_path, cube_files, "two"))
    assert two.stats.grids_total == 2 * one.stats.grids_total
    assert two.stats.grids_unique == one.stats.grids_unique
    assert len(one.records) == len(two.records)
    for a, b in zip(one.records, two.records):
        assert grids_identical(a.grid, b.grid)
        assert len(b.sources) == 2 * len(a.sources)
    assert two.stats.compression_factor == 2 * one.stats.compression_factor


def test_empty_object_list(tmp_path):
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(objects=[], output_dir=tmp_path)


def test_config_validation(tmp_path, cube_files):
    with pytest.raises(ConfigError):
        config(tmp_path, cube_files, spacing=0.05)
    with pytest.raises(ConfigError):
        config(tmp_path, cube_files, extraction_mode="dynamic")
    with pytest.raises(ConfigError):
        config(tmp_path, cube_files, seed=-1)


def test_load_config_globs_and_overrides(tmp_path, small_corpus):
    cfg_path = tmp_path / "cfg.yaml"
    rel = small_corpus[0].parent
    cfg_path.write_text(yaml.safe_dump({"objects": [str(rel / "*.obj")], "seed": 4,
                                        "gripper": {"resolution": 0.01}, "output_dir": "o"}))
    cfg = pipeline.load_config(cfg_path, seed=9, workers=None)
    assert cfg.objects == sorted(small_corpus)
    assert cfg.seed == 9 and cfg.workers == 1
    assert cfg.output_dir == tmp_path / "o"
    cfg_path.write_text(yaml.safe_dump({"objects": ["x.obj"], "colour": "red"}))
    with pytest.raises(ConfigError):
        pipeline.load_config(cfg_path)


def test_runs_are_byte_identical(tmp_path, small_corpus):
    a = pipeline.run_pipeline(config(tmp_path, small_corpus, "a"))
    b = pipeline.run_pipeline(config(tmp_path, small_corpus, "b", workers=4))
    for key in ("unique_grids", "all_grids", "composite", "manifest"):
        assert a.paths[key].read_bytes() == b.paths[key].read_bytes(), key


def test_stats_consistency(tmp_path, small_corpus):
    res = pipeline.run_pipeline(config(tmp_path, small_corpus))
    st = res.stats
    assert st.regions_nonempty == st.source_total + st.regions_dropped_small
    assert st.candidates == len(small_corpus) * SMALL["grasps_per_object"]
    assert st.naive_bytes == res.paths["all_grids"].stat().st_size
    assert st.unique_bytes == res.paths["unique_grids"].stat().st_size
    assert st.grids_unique == len(res.records) == len(read_grid_set(
        res.paths["unique_grids"].read_bytes())[1])
    assert st.compression_factor == pytest.approx(2.0)
    saved = json.loads(res.paths["stats"].read_text())
    assert StatsReport.from_dict(saved) == st
    assert set(st.timings_ms) >= {"load", "extract", "voxelize", "dedup", "assemble", "write"}


def test_min_points_drops_are_counted(tmp_path, small_corpus):
    st = pipeline.run_pipeline(config(tmp_path, small_corpus, min_points=40)).stats
    assert st.regions_dropped_small > 0
    assert st.regions_nonempty == st.source_total + st.regions_dropped_small


def test_compression_grows_with_copies(tmp_path):
    factors = []
    for m in (1, 2, 4):
        files = gen_synthetic_corpus("boxes", 2, m, seed=11, out_dir=tmp_path / f"c{m}")
        factors.append(pipeline.run_pipeline(config(tmp_path, files, f"o{m}")).stats
                       .compression_factor)
    assert factors[1] == pytest.approx(2 * factors[0])
    assert factors[2] == pytest.approx(4 * factors[0])


def test_stats_arithmetic():
    st = StatsReport(grids_total=1000, grids_unique=250, naive_bytes=800, unique_bytes=200)
    assert st.dedup_ratio == 0.25
    assert st.compression_factor == 4.0
    assert st.storage_factor == 4.0
    text, js = report_stats(st)
    assert "compression factor: 4.00" in text
    assert json.loads(js)["dedup_ratio"] == 0.25


def test_no_intersection_warning():
    st = StatsReport(candidates=10, regions_dropped_empty=10)
    assert st.dedup_ratio is None and st.compression_factor is None
    assert st.warnings and "no intersections" in report_stats(st)[0]
    st.check()


def test_stats_check_catches_leak():
    with pytest.raises(InvariantError):
        StatsReport(regions_nonempty=5, source_total=4, grids_total=4).check()


def test_bad_object_names_file(tmp_path, cube_files):
    bad = tmp_path / "broken.obj"
    bad.write_text("v 0 0 0\nf 1 2 3\n")
    with pytest.raises(pipeline.DataError, match="broken.obj"):
        pipeline.run_pipeline(config(tmp_path, [cube_files[0], bad]))


def test_missing_object(tmp_path):
    with pytest.raises(pipeline.DataError, match="nothere.obj"):
        pipeline.run_pipeline(config(tmp_path, [tmp_path / "nothere.obj"]))


def test_regions_npz_round_trip(tmp_path, cube_files):
    cfg = config(tmp_path, cube_files[:1])
    regions = [r for o in pipeline.extract_all(cfg) for r in o.regions if r is not None]
    pipeline.save_regions(tmp_path / "r.npz", regions)
    back = pipeline.load_regions(tmp_path / "r.npz", cfg.gripper)
    assert len(back) == len(regions)
    for a, b in zip(regions, back):
        assert (a.points == b.points).all() and a.source_object == b.source_object
        assert a.pose == b.pose


# -- CLI ------------------------------------------------------------------------

def write_cfg(tmp_path, objects, out):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump({"objects": [str(p) for p in objects], "output_dir": str(out),
                                    **SMALL}))
    return path


def test_cli_stage_chain_matches_run(tmp_path, small_corpus):
    cfg = write_cfg(tmp_path, small_corpus, tmp_path / "run")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    stage = tmp_path / "stage"
    assert cli.main(["extract", "--config", str(cfg), "--out", str(stage)]) == 0
    regions = str(stage / pipeline.REGIONS)
    assert cli.main(["dedup", "--config", str(cfg), "--out", str(stage), "--regions", regions]) == 0
    assert cli.main(["assemble", "--config", str(cfg), "--out", str(stage), "--regions", regions,
                     "--features", str(stage / pipeline.GRIDS_UNIQUE)]) == 0
    for name in (pipeline.GRIDS_UNIQUE, pipeline.GRIDS_ALL, pipeline.COMPOSITE, pipeline.MANIFEST):
        assert (tmp_path / "run" / name).read_bytes() == (stage / name).read_bytes(), name
    read_manifest((stage / pipeline.MANIFEST).read_text())


def test_cli_stats_and_gen_corpus(tmp_path, capsys):
    assert cli.main(["gen-corpus", "--family", "boxes", "--unique", "2", "--copies", "2",
                     "--out", str(tmp_path / "c")]) == 0
    files = sorted((tmp_path / "c").glob("*.obj"))
    assert len(files) == 4
    cfg = write_cfg(tmp_path, files, tmp_path / "o")
    assert cli.main(["run", "--config", str(cfg), "--seed", "3"]) == 0
    capsys.readouterr()
    assert cli.main(["stats", "--report", str(tmp_path / "o" / pipeline.STATS), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["compression_factor"] == pytest.approx(2.0)


def test_cli_exit_codes(tmp_path, cube_files, monkeypatch):
    assert cli.main([]) == 1
    assert cli.main(["run"]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 1
    bad = tmp_path / "broken.obj"
    bad.write_text("f 1 2 3\n")
    assert cli.main(["run", "--config", str(write_cfg(tmp_path, [bad], tmp_path / "o"))]) == 2

    def boom(cfg):
        raise InvariantError("stage broke", stage="dedup")

    monkeypatch.setattr(pipeline, "run_pipeline", boom)
    assert cli.main(["run", "--config", str(write_cfg(tmp_path, cube_files, tmp_path / "o"))]) == 3
