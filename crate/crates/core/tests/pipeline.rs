//! File-driven pipeline stages on small synthetic walls.

use std::path::{Path, PathBuf};

use filaqc::io::read_ply;
use filaqc::pipeline::*;
use filaqc::segmentation::{Backend, Frame, SegmentationResult};
use filaqc::synth::{SynthPath, SynthSpec};
use filaqc::tiling::TileManifest;
use serde_json::Value;
use tempfile::TempDir;

/// A 0.3 m wall: one rendered tile at fitted size.
fn short_wall() -> SynthSpec {
    SynthSpec {
        path: SynthPath::Straight { length_m: 0.3 },
        ..Default::default()
    }
}

fn workspace(spec: &SynthSpec) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(spec, 11, &dir.path().join("wall.ply")).unwrap();
    dir
}

fn config(dir: &Path, extra: &[&str]) -> PipelineConfig {
    let mut raw = RawConfig::from_str("[input]\npath = wall.ply\n[render]\nradius_px = 0\n", dir).unwrap();
    for e in extra {
        raw.set(e).unwrap();
    }
    raw.resolve().unwrap()
}

fn read(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_matches_individual_stages() {
    let dir = workspace(&short_wall());
    let run_cfg = config(dir.path(), &["output.dir=run"]);
    let timing = cmd_run(&run_cfg).unwrap();
    assert_eq!(timing.tiles, 1);
    let sum = timing.pre_processing_ms + timing.segmentation_ms + timing.post_processing_ms;
    assert!((sum - timing.total_ms).abs() <= 0.05 * timing.total_ms);
    assert!((timing.fps - 1000.0 / timing.total_ms).abs() < 1e-9);

    let cfg = config(dir.path(), &["output.dir=staged"]);
    cmd_render(&cfg, None).unwrap();
    cmd_segment(&cfg, None).unwrap();
    cmd_merge(&cfg, None).unwrap();
    cmd_profile(&cfg, None).unwrap();
    cmd_backproject(&cfg, None).unwrap();

    let mut a = tree(&run_cfg.output_dir);
    a.retain(|(p, _)| p != Path::new("timing.json"));
    let b = tree(&cfg.output_dir);
    assert_eq!(a.iter().map(|f| &f.0).collect::<Vec<_>>(), b.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((p, x), (_, y)) in a.iter().zip(&b) {
        assert!(x == y, "{} differs", p.display());
    }
}

#[test]
fn render_writes_rasters_and_manifest() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &[]);
    let report = cmd_render(&cfg, None).unwrap();
    let layout = Layout::new(&cfg.output_dir);
    assert!(layout.index_raster().exists() && layout.depth_raster().exists() && layout.image().exists());
    let manifest = TileManifest::load(&layout.manifest()).unwrap();
    assert!(!manifest.tiles.is_empty());
    assert_eq!((manifest.width, manifest.height), (report.width, report.height));
    assert!((report.gsd_m - 0.001).abs() < 1e-5);
    assert_eq!(report.points_total, report.points_in_frustum);

    // the render can be rebuilt from its files
    let buffer = load_render(&layout).unwrap();
    assert_eq!(buffer.pose, report.pose().unwrap());
    assert_eq!(buffer.filled_pixels(), report.filled_pixels);
}

#[test]
fn profiles_compare_to_plan() {
    let dir = workspace(&short_wall());
    std::fs::write(dir.path().join("plan.txt"), "10\n10\n10\n10\n12\n").unwrap();
    let cfg = config(dir.path(), &["profile.plan=plan.txt"]);
    cmd_run(&cfg).unwrap();
    let report = read(Layout::new(&cfg.output_dir).profile_report());
    let instances = report["instances"].as_array().unwrap();
    assert_eq!(instances.len(), 5);
    for i in instances {
        let mean = i["stats"]["mean_mm"].as_f64().unwrap();
        assert!((mean - 10.0).abs() <= 2.0, "mean {mean}");
        assert!(cfg.output_dir.join("profile").join(i["plot"].as_str().unwrap()).exists());
    }
    let layers = report["plan"]["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 5);
    // top layer was planned 2 mm higher than printed
    let top = layers[4]["deviation_mm"].as_f64().unwrap();
    assert!((top + 2.0).abs() < 0.1, "deviation {top}");
    assert_eq!(report["plan"]["ordering_ambiguous"], Value::Bool(false));
}

#[test]
fn blank_tiles_get_empty_mask_files() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &["camera.width_px=1536", "camera.height_px=512"]);
    cmd_render(&cfg, None).unwrap();
    cmd_segment(&cfg, None).unwrap();
    let layout = Layout::new(&cfg.output_dir);
    // anchors 0, 448, 896 and the flush tile at 1024; the wall spans 618..918
    let counts: Vec<usize> = (0..4)
        .map(|i| read(layout.mask_file(i))["masks"].as_array().unwrap().len())
        .collect();
    assert_eq!(counts[0], 0);
    assert_eq!(counts[3], 0);
    assert!(counts[1] >= 5 && counts[2] >= 5, "{counts:?}");
    assert_eq!(cmd_merge(&cfg, None).unwrap().instances.len(), 5);
}

fn write_external(dir: &Path, manifest: &TileManifest) -> PathBuf {
    let ext = dir.join("external");
    std::fs::create_dir_all(&ext).unwrap();
    for t in &manifest.tiles {
        let frame = Frame::Tile { origin: (t.origin[0], t.origin[1]) };
        let r = SegmentationResult::empty("wall", t.width, t.height, frame, Backend::External);
        std::fs::write(ext.join(mask_file_name(t.index)), r.to_json()).unwrap();
    }
    ext
}

#[test]
fn no_instances_gives_empty_report() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &[]);
    cmd_render(&cfg, None).unwrap();
    let manifest = TileManifest::load(&Layout::new(&cfg.output_dir).manifest()).unwrap();
    write_external(dir.path(), &manifest);
    let cfg = config(dir.path(), &["segmentation.backend=external", "segmentation.mask_dir=external"]);
    assert_eq!(cmd_segment(&cfg, None).unwrap(), 0);
    assert!(cmd_merge(&cfg, None).unwrap().instances.is_empty());
    assert!(cmd_profile(&cfg, None).unwrap().instances.is_empty());
    assert_eq!(cmd_backproject(&cfg, None).unwrap(), 0);
    let labeled = read_ply(&Layout::new(&cfg.output_dir).labeled()).unwrap();
    assert!(labeled.labels.unwrap().iter().all(|&l| l == 0));
}

#[test]
fn invalid_external_file_is_named() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &[]);
    cmd_render(&cfg, None).unwrap();
    let manifest = TileManifest::load(&Layout::new(&cfg.output_dir).manifest()).unwrap();
    let ext = write_external(dir.path(), &manifest);
    std::fs::write(ext.join("tile_0000.json"), r#"{"image_id":"x","width":512}"#).unwrap();
    let cfg = config(dir.path(), &["segmentation.backend=external", "segmentation.mask_dir=external"]);
    let e = cmd_segment(&cfg, None).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    assert!(e.to_string().contains("tile_0000.json"), "{e}");
}

#[test]
fn external_masks_must_match_the_manifest() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &[]);
    cmd_render(&cfg, None).unwrap();
    let mut manifest = TileManifest::load(&Layout::new(&cfg.output_dir).manifest()).unwrap();
    manifest.tiles[0].origin = [5, 0];
    write_external(dir.path(), &manifest);
    let cfg = config(dir.path(), &["segmentation.backend=external", "segmentation.mask_dir=external"]);
    let e = cmd_segment(&cfg, None).unwrap_err();
    assert!(e.to_string().contains("origin"), "{e}");
}

#[test]
fn backprojection_labels_visible_points() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &[]);
    cmd_run(&cfg).unwrap();
    let layout = Layout::new(&cfg.output_dir);
    let truth = read_ply(&dir.path().join("wall.ply")).unwrap();
    let labeled = read_ply(&layout.labeled()).unwrap();
    assert_eq!(labeled.cloud.points(), truth.cloud.points());
    let legend = read(layout.legend());
    assert_eq!(legend["points"].as_u64().unwrap() as usize, truth.cloud.len());
    assert_eq!(legend["instances"].as_array().unwrap().len(), 5);
    let labels = labeled.labels.unwrap();
    let labeled_count = labels.iter().filter(|&&l| l != 0).count();
    assert_eq!(legend["labeled_points"].as_u64().unwrap() as usize, labeled_count);
    // the wall is seen from one side only
    assert!(labeled_count > truth.cloud.len() / 10 && labeled_count < truth.cloud.len());
}

#[test]
fn stages_need_their_inputs() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &[]);
    let e = cmd_segment(&cfg, None).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    assert!(e.to_string().contains("manifest.json"), "{e}");

    let missing = config(dir.path(), &["input.path=nowhere.ply"]);
    let e = cmd_render(&missing, None).unwrap_err();
    assert!(e.to_string().contains("nowhere.ply"), "{e}");
    assert!(!missing.output_dir.exists());
}

#[test]
fn backprojection_rejects_a_different_cloud() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &[]);
    cmd_run(&cfg).unwrap();
    cmd_synth(&SynthSpec { n_layers: 4, ..short_wall() }, 11, &dir.path().join("other.ply")).unwrap();
    let other = config(dir.path(), &["input.path=other.ply"]);
    let e = cmd_backproject(&other, None).unwrap_err();
    assert!(e.to_string().contains("points"), "{e}");
}

#[test]
fn signed_distance_coloring_renders() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &["render.color=signed_distance", "render.plane_fit=ransac"]);
    let report = cmd_render(&cfg, None).unwrap();
    assert!(report.filled_pixels > 0);
}

#[test]
fn known_sensor_placement_sees_the_wall() {
    let dir = workspace(&short_wall());
    let cfg = config(dir.path(), &["camera.mode=ksp", "camera.sensor_pos=0.15, 3, 0.2"]);
    let report = cmd_render(&cfg, None).unwrap();
    assert_eq!(report.points_in_frustum, report.points_total);
    assert!((report.working_distance_m - 1.0).abs() < 1e-12);
}

#[test]
fn synth_writes_truth() {
    let dir = tempfile::tempdir().unwrap();
    let truth = cmd_synth(&short_wall(), 3, &dir.path().join("a/wall.ply")).unwrap();
    let t = read(&truth);
    assert_eq!(t["layers"].as_array().unwrap().len(), 5);
    assert_eq!(t["seed"], 3);
    let ply = read_ply(&dir.path().join("a/wall.ply")).unwrap();
    assert_eq!(t["points"].as_u64().unwrap() as usize, ply.cloud.len());
    assert!(ply.labels.unwrap().iter().all(|&l| (1..=5).contains(&l)));

    let bad = SynthSpec { point_spacing_mm: 9.0, ..short_wall() };
    assert_eq!(cmd_synth(&bad, 3, &dir.path().join("b.ply")).unwrap_err().exit_code(), 2);
}
