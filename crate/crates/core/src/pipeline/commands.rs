//! File-driven pipeline stages. Each command reads what the previous one
//! wrote under the output directory, so `run` produces exactly the same files
//! as invoking the stages one by one.

use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;

use super::config::{ColorMode, PipelineConfig, Placement, SegBackend};
use super::report::*;
use super::RunError;
use crate::backproject::{export_labeled, label_points};
use crate::camera::{build_frustum, clip, fit_image_to_aabb, place_ksp, place_pp, working_distance, Intrinsics, Pose};
use crate::error::Error;
use crate::geometry::{compute_aabb, compute_centroid, fit_plane, signed_distance_colorize, PointCloud};
use crate::io::{load_point_cloud, read_ply, read_xyz, write_ply, PlyEncoding};
use crate::profile::{column_profile, compare_to_plan, distance_map};
use crate::render::{read_index_raster, render, RenderBuffer};
use crate::segmentation::{export_masks, filter_masks, import_masks, segment_baseline, Frame, GrayTile};
use crate::synth::{generate, SynthSpec};
use crate::tiling::{merge_instances, reattach, TileGrid, TileManifest};

type Result<T> = std::result::Result<T, RunError>;

/// Output directory layout.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn render_dir(&self) -> PathBuf {
        self.root.join("render")
    }
    pub fn image(&self) -> PathBuf {
        self.render_dir().join("image.png")
    }
    pub fn index_raster(&self) -> PathBuf {
        self.render_dir().join("index.vcidx")
    }
    pub fn depth_raster(&self) -> PathBuf {
        self.render_dir().join("depth.vcdpt")
    }
    pub fn render_report(&self) -> PathBuf {
        self.render_dir().join("render.json")
    }
    pub fn tiles_dir(&self) -> PathBuf {
        self.root.join("tiles")
    }
    pub fn manifest(&self) -> PathBuf {
        self.tiles_dir().join("manifest.json")
    }
    pub fn masks_dir(&self) -> PathBuf {
        self.root.join("masks")
    }
    pub fn mask_file(&self, tile: usize) -> PathBuf {
        self.masks_dir().join(mask_file_name(tile))
    }
    pub fn instances(&self) -> PathBuf {
        self.root.join("instances.json")
    }
    pub fn profile_dir(&self) -> PathBuf {
        self.root.join("profile")
    }
    pub fn profile_report(&self) -> PathBuf {
        self.profile_dir().join("report.json")
    }
    pub fn labeled(&self) -> PathBuf {
        self.root.join("labeled.ply")
    }
    pub fn legend(&self) -> PathBuf {
        self.root.join("labeled_legend.json")
    }
    pub fn timing(&self) -> PathBuf {
        self.root.join("timing.json")
    }
}

/// Mask file name for a tile, both for baseline output and external input.
pub fn mask_file_name(tile: usize) -> String {
    format!("tile_{tile:04}.json")
}

fn input_err(e: Error) -> RunError {
    RunError::Input(e)
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| input_err(Error::io(dir, e)))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| input_err(Error::io(dir, e)))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| input_err(Error::io(dir, e)))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn image_id(cfg: &PipelineConfig) -> String {
    cfg.input.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud").to_string()
}

pub fn load_input(cfg: &PipelineConfig) -> Result<PointCloud> {
    if !cfg.input.exists() {
        return Err(RunError::Input(Error::io(
            &cfg.input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input cloud not found"),
        )));
    }
    let cloud = match cfg.format {
        Some(f) => load_point_cloud(&cfg.input, f),
        None => {
            let is_ply = cfg.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
            if is_ply {
                read_ply(&cfg.input).map(|c| c.cloud)
            } else {
                read_xyz(&cfg.input)
            }
        }
    };
    cloud.map_err(input_err)
}

/// Camera pose and intrinsics for `cloud` under the camera section.
pub fn setup_camera(cfg: &PipelineConfig, cloud: &PointCloud) -> Result<(Pose, Intrinsics, f64)> {
    let cam = &cfg.camera;
    let d = working_distance(cam.target_gsd_m, cam.pixel_size_mm, cam.focal_mm).map_err(input_err)?;
    let aabb = compute_aabb(cloud).map_err(input_err)?;
    let pose = match cam.placement {
        Placement::Predefined { side } => place_pp(&aabb, side, d),
        Placement::KnownSensor { sensor_pos, mode } => {
            let c = compute_centroid(cloud).map_err(input_err)?;
            place_ksp(sensor_pos, c, mode, d)
        }
    }
    .map_err(input_err)?;
    let mut intr = if cam.width_px == 0 {
        fit_image_to_aabb(&pose, cam.focal_mm, cam.pixel_size_mm, &aabb, cfg.tiling.tile_px).map_err(input_err)?
    } else {
        Intrinsics::centered(cam.focal_mm, cam.pixel_size_mm, cam.width_px, cam.height_px).map_err(input_err)?
    };
    if let Some((cx, cy)) = cam.principal_point {
        intr = Intrinsics::new(intr.focal_mm, intr.pixel_size_mm, intr.width_px, intr.height_px, cx, cy)
            .map_err(|e| RunError::Config(super::config::ConfigError(format!("camera: {e}"))))?;
    }
    Ok((pose, intr, d))
}

/// Renders the input cloud, writes the image, rasters and render report,
/// then cuts the image into tiles and writes the tile manifest.
pub fn cmd_render(cfg: &PipelineConfig, mut timing: Option<&mut TimingReport>) -> Result<RenderReport> {
    let cloud = load_input(cfg)?;
    let t = Instant::now();
    let colored = match cfg.render.color {
        ColorMode::Native => cloud.clone(),
        ColorMode::SignedDistance(fit) => {
            let plane = fit_plane(&cloud, fit).map_err(input_err)?;
            signed_distance_colorize(&cloud, &plane)
        }
    };
    let (pose, intr, d) = setup_camera(cfg, &cloud)?;
    let frustum = build_frustum(&pose, &intr, cfg.camera.near_m, cfg.camera.far_m.unwrap_or(4.0 * d)).map_err(input_err)?;
    let visible = clip(&colored, &frustum);
    let buffer = render(&colored, &visible, &pose, &intr, &cfg.render.splat).map_err(RunError::from_lib)?;
    if let Some(t_rep) = timing.as_deref_mut() {
        t_rep.render_ms = ms(t);
    }

    let layout = Layout::new(&cfg.output_dir);
    fresh_dir(&layout.render_dir())?;
    buffer.save_png(&layout.image()).map_err(input_err)?;
    buffer.save_index_raster(&layout.index_raster()).map_err(input_err)?;
    buffer.save_depth_raster(&layout.depth_raster()).map_err(input_err)?;
    let r = pose.rotation;
    let report = RenderReport {
        image_id: image_id(cfg),
        source: cfg.input.display().to_string(),
        width: buffer.width,
        height: buffer.height,
        gsd_m: buffer.gsd_m,
        working_distance_m: d,
        rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
        translation: pose.translation.into(),
        camera_center: pose.camera_center().into(),
        intrinsics: intr,
        splat: cfg.render.splat,
        points_total: cloud.len(),
        points_in_frustum: visible.len(),
        filled_pixels: buffer.filled_pixels(),
    };
    write_json(&layout.render_report(), &report).map_err(input_err)?;

    let t = Instant::now();
    let grid = TileGrid::new(buffer.width, buffer.height, cfg.tiling.tile_px, cfg.tiling.overlap_px)
        .map_err(RunError::from_lib)?;
    let tiles = grid.tile(&buffer.to_image()).map_err(RunError::from_lib)?;
    if let Some(t_rep) = timing {
        t_rep.pre_processing_ms = ms(t);
        t_rep.tiles = tiles.len();
    }
    fresh_dir(&layout.tiles_dir())?;
    let manifest = TileManifest::new(&report.image_id, &grid, buffer.gsd_m);
    for (tile, entry) in tiles.iter().zip(&manifest.tiles) {
        let p = layout.tiles_dir().join(&entry.file);
        tile.save(&p).map_err(|e| input_err(Error::Image { path: p.clone(), source: e }))?;
    }
    manifest.save(&layout.manifest()).map_err(input_err)?;
    Ok(report)
}

fn load_manifest(layout: &Layout) -> Result<(TileManifest, TileGrid)> {
    let manifest = TileManifest::load(&layout.manifest()).map_err(input_err)?;
    let grid = manifest.grid().map_err(|e| {
        input_err(Error::Schema {
            path: layout.manifest(),
            msg: e.to_string(),
        })
    })?;
    Ok((manifest, grid))
}

fn load_tile(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| input_err(Error::Image { path: path.to_path_buf(), source: e }))?
        .to_rgb8())
}

/// Produces one mask file per tile: baseline segmentation of the rendered
/// tiles, or validation and normalization of an external backend's files.
pub fn cmd_segment(cfg: &PipelineConfig, timing: Option<&mut TimingReport>) -> Result<usize> {
    let layout = Layout::new(&cfg.output_dir);
    let (manifest, grid) = load_manifest(&layout)?;
    let mut results = Vec::with_capacity(grid.len());
    match &cfg.segmentation.backend {
        SegBackend::Baseline(params) => {
            let (w, h, index) = read_index_raster(&layout.index_raster()).map_err(input_err)?;
            if (w, h) != (grid.width, grid.height) {
                return Err(input_err(Error::Schema {
                    path: layout.index_raster(),
                    msg: format!("raster is {w}x{h}, manifest says {}x{}", grid.width, grid.height),
                }));
            }
            let mut per_tile = Vec::with_capacity(grid.len());
            for (i, entry) in manifest.tiles.iter().enumerate() {
                let img = load_tile(&layout.tiles_dir().join(&entry.file))?;
                let r = grid.rect(i);
                if img.dimensions() != (r.w, r.h) {
                    return Err(input_err(Error::Schema {
                        path: layout.tiles_dir().join(&entry.file),
                        msg: "tile image size does not match the manifest".into(),
                    }));
                }
                let valid = (r.y0..r.y1())
                    .flat_map(|y| (r.x0..r.x1()).map(move |x| (x, y)))
                    .map(|(x, y)| index[(y * w + x) as usize] != crate::render::EMPTY)
                    .collect();
                let t = Instant::now();
                let tile = GrayTile::from_rgb(&img, Some(valid)).map_err(RunError::from_lib)?;
                let id = format!("{}_tile_{i:04}", manifest.image_id);
                let res = segment_baseline(&id, &tile, params, Frame::Tile { origin: (r.x0, r.y0) })
                    .map_err(RunError::from_lib)?;
                let res = filter_masks(&res, 0, cfg.segmentation.min_confidence);
                per_tile.push(ms(t));
                results.push(res);
            }
            if let Some(t_rep) = timing {
                t_rep.segmentation_ms = per_tile.iter().sum();
                t_rep.segmentation_per_tile_ms = per_tile;
            }
        }
        SegBackend::External { mask_dir } => {
            for i in 0..grid.len() {
                let path = mask_dir.join(mask_file_name(i));
                let res = import_masks(&path).map_err(input_err)?;
                let r = grid.rect(i);
                if res.frame != (Frame::Tile { origin: (r.x0, r.y0) }) || (res.width, res.height) != (r.w, r.h) {
                    return Err(input_err(Error::Schema {
                        path,
                        msg: format!("expected tile frame at origin ({}, {}) of size {}x{}", r.x0, r.y0, r.w, r.h),
                    }));
                }
                results.push(filter_masks(&res, 0, cfg.segmentation.min_confidence));
            }
        }
    }
    fresh_dir(&layout.masks_dir())?;
    let mut count = 0;
    for (i, res) in results.iter().enumerate() {
        export_masks(res, &layout.mask_file(i)).map_err(input_err)?;
        count += res.masks.len();
    }
    Ok(count)
}

/// Merges the per-tile masks into global instances.
pub fn cmd_merge(cfg: &PipelineConfig, timing: Option<&mut TimingReport>) -> Result<InstancesFile> {
    let layout = Layout::new(&cfg.output_dir);
    let (manifest, grid) = load_manifest(&layout)?;
    let results = (0..grid.len())
        .map(|i| import_masks(&layout.mask_file(i)).map_err(input_err))
        .collect::<Result<Vec<_>>>()?;
    let t = Instant::now();
    let placed = reattach(&grid, &results).map_err(input_err)?;
    let instances = merge_instances(&grid, &placed, cfg.tiling.iou_threshold).map_err(RunError::from_lib)?;
    if let Some(t_rep) = timing {
        t_rep.post_processing_ms += ms(t);
    }
    let file = InstancesFile::new(&manifest.image_id, grid.width, grid.height, cfg.tiling.iou_threshold, &instances);
    write_json(&layout.instances(), &file).map_err(input_err)?;
    Ok(file)
}

/// Thickness profiles of every merged instance, plots, and the optional plan comparison.
pub fn cmd_profile(cfg: &PipelineConfig, timing: Option<&mut TimingReport>) -> Result<ProfileReport> {
    let layout = Layout::new(&cfg.output_dir);
    let render_report: RenderReport = read_json(&layout.render_report()).map_err(input_err)?;
    let file: InstancesFile = read_json(&layout.instances()).map_err(input_err)?;
    let instances = file.to_instances(&layout.instances()).map_err(input_err)?;
    let plan = cfg.profile.plan.as_ref().map(|p| read_plan(p).map_err(input_err)).transpose()?;
    if render_report.gsd_m <= 0.0 && !instances.is_empty() {
        return Err(RunError::Internal("render has instances but no GSD".into()));
    }

    let t = Instant::now();
    let profiles = instances
        .iter()
        .map(|i| column_profile(&distance_map(i.id, &i.mask), cfg.profile.mode, render_report.gsd_m))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(RunError::from_lib)?;
    let comparison = plan.as_ref().map(|p| compare_to_plan(&profiles, p)).transpose().map_err(input_err)?;
    if let Some(t_rep) = timing {
        t_rep.post_processing_ms += ms(t);
    }

    fresh_dir(&layout.profile_dir())?;
    let mut reports = Vec::with_capacity(profiles.len());
    for p in &profiles {
        let thickness: Vec<Option<f64>> =
            p.thickness_mm.iter().zip(&p.valid).map(|(&t, &v)| v.then_some(t)).collect();
        let planned = comparison
            .as_ref()
            .and_then(|c| c.layers.iter().find(|l| l.instance_id == p.instance_id))
            .map(|l| l.planned_mm);
        let plot = format!("instance_{:03}.png", p.instance_id);
        let plot_path = layout.profile_dir().join(&plot);
        plot_profile(&thickness, planned)
            .save(&plot_path)
            .map_err(|e| input_err(Error::Image { path: plot_path, source: e }))?;
        reports.push(InstanceProfileReport {
            id: p.instance_id,
            mode: p.mode,
            x0: p.x0,
            columns: p.valid.len(),
            valid_count: p.valid.iter().filter(|&&v| v).count(),
            thickness_mm: thickness,
            stats: p.stats,
            mean_row: p.mean_row,
            plot,
        });
    }
    let report = ProfileReport {
        image_id: file.image_id,
        gsd_m: render_report.gsd_m,
        mode: cfg.profile.mode,
        instances: reports,
        plan: comparison.map(|c| PlanReport {
            source: cfg.profile.plan.as_ref().unwrap().display().to_string(),
            layers: c.layers,
            ordering_ambiguous: c.ordering_ambiguous,
        }),
    };
    write_json(&layout.profile_report(), &report).map_err(input_err)?;
    Ok(report)
}

/// Rebuilds the parts of a render needed for back-projection from its files.
pub fn load_render(layout: &Layout) -> Result<RenderBuffer> {
    let report: RenderReport = read_json(&layout.render_report()).map_err(input_err)?;
    let (w, h, index_map) = read_index_raster(&layout.index_raster()).map_err(input_err)?;
    if (w, h) != (report.width, report.height) {
        return Err(input_err(Error::Schema {
            path: layout.index_raster(),
            msg: "index raster size does not match the render report".into(),
        }));
    }
    let (_, _, depth) = crate::render::read_depth_raster(&layout.depth_raster()).map_err(input_err)?;
    let color = load_tile(&layout.image())?.pixels().map(|p| p.0).collect();
    Ok(RenderBuffer {
        width: w,
        height: h,
        color,
        depth: depth.into_iter().map(f64::from).collect(),
        index_map,
        gsd_m: report.gsd_m,
        pose: report.pose().map_err(input_err)?,
        intrinsics: report.intrinsics,
    })
}

/// Labels the input cloud from the merged instances and writes the labeled PLY and legend.
pub fn cmd_backproject(cfg: &PipelineConfig, timing: Option<&mut TimingReport>) -> Result<usize> {
    let layout = Layout::new(&cfg.output_dir);
    let cloud = load_input(cfg)?;
    let report: RenderReport = read_json(&layout.render_report()).map_err(input_err)?;
    if report.points_total != cloud.len() {
        return Err(input_err(Error::Schema {
            path: cfg.input.clone(),
            msg: format!("cloud has {} points but was rendered with {}", cloud.len(), report.points_total),
        }));
    }
    let buffer = load_render(&layout)?;
    let file: InstancesFile = read_json(&layout.instances()).map_err(input_err)?;
    let instances = file.to_instances(&layout.instances()).map_err(input_err)?;
    let backend = match cfg.segmentation.backend {
        SegBackend::Baseline(_) => "baseline",
        SegBackend::External { .. } => "external",
    };
    let t = Instant::now();
    let labeled = label_points(&cloud, &buffer, &instances, format!("render {} / {backend}", report.image_id))
        .map_err(RunError::from_lib)?;
    if let Some(t_rep) = timing {
        t_rep.backproject_ms = ms(t);
    }
    export_labeled(&labeled, &instances, &layout.labeled(), &layout.legend(), PlyEncoding::BinaryLittleEndian)
        .map_err(input_err)?;
    Ok(labeled.labeled_count())
}

/// Runs all stages in order and writes `timing.json`.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<TimingReport> {
    ensure_dir(&cfg.output_dir)?;
    let mut timing = TimingReport::default();
    cmd_render(cfg, Some(&mut timing))?;
    cmd_segment(cfg, Some(&mut timing))?;
    cmd_merge(cfg, Some(&mut timing))?;
    cmd_profile(cfg, Some(&mut timing))?;
    cmd_backproject(cfg, Some(&mut timing))?;
    timing.finish();
    write_json(&Layout::new(&cfg.output_dir).timing(), &timing).map_err(input_err)?;
    Ok(timing)
}

/// Ground truth written next to a synthetic cloud.
#[derive(Debug, serde::Serialize)]
pub struct SynthTruth<'a> {
    pub spec: &'a SynthSpec,
    pub seed: u64,
    pub points: usize,
    pub layers: &'a [crate::synth::LayerTruth],
}

/// Writes a synthetic wall as a binary PLY with a `label` property plus a
/// `.truth.json` file alongside; returns the truth file path.
pub fn cmd_synth(spec: &SynthSpec, seed: u64, out: &Path) -> Result<PathBuf> {
    spec.validate().map_err(|e| RunError::Config(super::config::ConfigError(format!("synth: {e}"))))?;
    let s = generate(spec, seed).map_err(RunError::from_lib)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_ply(out, &s.cloud, PlyEncoding::BinaryLittleEndian, Some(&s.labels)).map_err(input_err)?;
    let truth = out.with_extension("truth.json");
    let record = SynthTruth {
        spec,
        seed,
        points: s.cloud.len(),
        layers: &s.layers,
    };
    write_json(&truth, &record).map_err(input_err)?;
    Ok(truth)
}
