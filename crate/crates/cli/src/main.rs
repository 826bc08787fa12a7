use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use smartbrush_core::coherence::rank_materials;
use smartbrush_core::dataset::{propose_split, MaskMode};
use smartbrush_core::eval::{evaluate_generator, score_images, EvalReport, Metrics};
use smartbrush_core::generators::brushgan::{train_brushgan, BrushGan, BrushGanConfig, GanSchedule};
use smartbrush_core::generators::checkpoint::{load_generator, save_checkpoint};
use smartbrush_core::generators::cldm::{train_cldm, BrushCldm, CldmConfig, CldmSchedule};
use smartbrush_core::generators::train::map_dataset;
use smartbrush_core::generators::{ChunkGenerator, GeneratorModel};
use smartbrush_core::losses::FeatureExtractor;
use smartbrush_core::map::bundle::{read_mask, read_rgb, write_chunk_tiles, write_rgb};
use smartbrush_core::map::{blend_chunk, load_map_bundle, save_map_bundle, BrushMask, Coord, GameMap};
use smartbrush_core::stitching::{generate_region, StitchConfig};
use smartbrush_core::synth::{synthetic_map, SyntheticMapSpec};
use smartbrush_service::{AppState, ServiceConfig};

const SPLIT_AM_SEED: u64 = 0x5eed_a11b;
const SPLIT_TILE_SEED: u64 = 0x5eed_711e;

#[derive(Parser)]
#[command(name = "smartbrush", version, about = "Tile-mask map editing with brush inpainting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic map bundles for experiments.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        maps: u32,
        #[arg(long, default_value_t = 2)]
        grid: u32,
        #[arg(long, default_value_t = 64)]
        tile_size: usize,
        /// Comma-separated categories assigned round-robin.
        #[arg(long, value_delimiter = ',')]
        categories: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pick train/test maps by pairwise similarity.
    SplitDataset {
        #[arg(long)]
        bundle_dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        per_category: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated renders against ground truth.
    ///
    /// With --pred-dir/--gt-dir, images are paired by file name and fill one
    /// mask-mode column. With --bundle-dir, the generator is run on every chunk
    /// under random masks of each mode.
    Eval {
        #[arg(long, requires = "gt_dir", conflicts_with = "bundle_dir")]
        pred_dir: Option<PathBuf>,
        #[arg(long)]
        gt_dir: Option<PathBuf>,
        #[arg(long)]
        bundle_dir: Option<PathBuf>,
        /// `baseline` or a checkpoint path (bundle mode).
        #[arg(long, default_value = "baseline")]
        model: String,
        /// Row label in the report; defaults to the generator name.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value = "fid,ssim")]
        metrics: String,
        #[arg(long, value_enum)]
        mask_mode: Vec<ModeArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Existing reports at this path are extended rather than replaced.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a neural generator on the chunks of a bundle directory.
    Train {
        #[arg(long, value_enum)]
        arch: Arch,
        #[arg(long)]
        bundle_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model resolution; chunks are resampled to it.
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inpaint one chunk under a brush mask.
    Generate {
        #[arg(long, default_value = "baseline")]
        model: String,
        #[arg(long)]
        bundle_dir: PathBuf,
        #[arg(long)]
        chunk: Coord,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rank a chunk's materials by template match against the albedo map.
    RankMaterials {
        #[arg(long)]
        bundle_dir: PathBuf,
        #[arg(long)]
        chunk: Coord,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a brushed region with seam stitching and report seam scores.
    Stitch {
        #[arg(long)]
        bundle_dir: PathBuf,
        /// Inclusive chunk range `x0,y0:x1,y1`.
        #[arg(long)]
        region: Region,
        /// Brush masks named `x_y.png`; chunks without one are left alone.
        #[arg(long)]
        mask_dir: PathBuf,
        #[arg(long, default_value = "baseline")]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the stitch and smoothing steps.
        #[arg(long)]
        no_stitch: bool,
        #[arg(long)]
        report: PathBuf,
        /// Also write the edited map as a bundle here.
        #[arg(long)]
        out_bundle: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        bundle_root: PathBuf,
        #[arg(long)]
        export_root: Option<PathBuf>,
        /// Extra generator as `name=checkpoint`; repeatable.
        #[arg(long, value_parser = parse_model)]
        model: Vec<(String, PathBuf)>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Medium,
    Hard,
    Complete,
}

impl From<ModeArg> for MaskMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Medium => MaskMode::Medium,
            ModeArg::Hard => MaskMode::Hard,
            ModeArg::Complete => MaskMode::Complete,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Brushgan,
    Brushcldm,
}

#[derive(Clone, Copy, Debug)]
struct Region(Coord, Coord);

impl std::str::FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or("expected x0,y0:x1,y1")?;
        let a: Coord = a.parse().map_err(|e| format!("{e}"))?;
        let b: Coord = b.parse().map_err(|e| format!("{e}"))?;
        if a.x > b.x || a.y > b.y {
            return Err(format!("empty region {a}:{b}"));
        }
        Ok(Region(a, b))
    }
}

fn parse_model(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected name=path")?;
    if name.is_empty() {
        return Err("empty model name".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

/// A bundle directory, or a directory whose subdirectories are bundles.
fn load_bundles(dir: &Path) -> Result<Vec<GameMap>> {
    if dir.join("manifest.json").is_file() {
        return Ok(vec![load_map_bundle(dir)?]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no map bundles under {}", dir.display());
    }
    dirs.iter()
        .map(|d| load_map_bundle(d).with_context(|| format!("loading {}", d.display())))
        .collect()
}

fn load_one(dir: &Path) -> Result<GameMap> {
    load_map_bundle(dir).with_context(|| format!("loading {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn png_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), p);
        }
    }
    Ok(out)
}

fn synth(out_dir: &Path, maps: u32, grid: u32, tile: usize, categories: &[String], seed: u64) -> Result<()> {
    for i in 0..maps {
        let name = format!("map{i:02}");
        let mut spec = SyntheticMapSpec::new(&name, grid, tile, seed.wrapping_add(i as u64));
        if !categories.is_empty() {
            spec = spec.category(&categories[i as usize % categories.len()]);
        }
        save_map_bundle(&synthetic_map(&spec), out_dir.join(&name))?;
    }
    println!("wrote {maps} bundles to {}", out_dir.display());
    Ok(())
}

fn eval(
    pred_dir: Option<PathBuf>,
    gt_dir: Option<PathBuf>,
    bundle_dir: Option<PathBuf>,
    model: &str,
    name: Option<String>,
    metrics: Metrics,
    modes: Vec<MaskMode>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut report = if out.is_file() {
        serde_json::from_slice(&std::fs::read(out)?).with_context(|| format!("parsing {}", out.display()))?
    } else {
        EvalReport::new(metrics)
    };
    match (pred_dir, gt_dir, bundle_dir) {
        (Some(p), Some(g), None) => {
            let [mode] = modes[..] else {
                bail!("--pred-dir needs exactly one --mask-mode");
            };
            let pred = png_files(&p)?;
            let gt = png_files(&g)?;
            if pred.keys().ne(gt.keys()) {
                bail!("{} and {} hold different file names", p.display(), g.display());
            }
            let pi = pred.values().map(|f| read_rgb(f)).collect::<Result<Vec<_>, _>>()?;
            let gi = gt.values().map(|f| read_rgb(f)).collect::<Result<Vec<_>, _>>()?;
            let row = name.unwrap_or_else(|| model.to_string());
            report.insert(&row, mode, score_images(&pi, &gi, metrics)?);
        }
        (None, None, Some(d)) => {
            let maps = load_bundles(&d)?;
            let generator = load_generator(model)?;
            let corpus: Vec<(&GameMap, Coord)> =
                maps.iter().flat_map(|m| m.chunks.keys().map(move |c| (m, *c))).collect();
            let modes = if modes.is_empty() { MaskMode::ALL.to_vec() } else { modes };
            let row = name.unwrap_or_else(|| generator.name().to_string());
            log::info!("evaluating {row} on {} chunks", corpus.len());
            evaluate_generator(&mut report, &row, &corpus, &generator, &modes, metrics, seed)?;
        }
        _ => bail!("give either --pred-dir and --gt-dir, or --bundle-dir"),
    }
    write_json(out, &report)?;
    print!("{}", report.to_table());
    Ok(())
}

fn train(arch: Arch, bundle_dir: &Path, epochs: usize, seed: u64, side: usize, out: &Path) -> Result<()> {
    let maps = load_bundles(bundle_dir)?;
    let data = map_dataset(&maps, side)?;
    let ctx = data.first().context("no chunks to train on")?.context.plane_count();
    let model = match arch {
        Arch::Brushgan => {
            let config = BrushGanConfig { side, context_channels: ctx, ..BrushGanConfig::default() };
            let mut m = BrushGan::new(config, seed)?;
            let schedule = GanSchedule {
                coarse_epochs: epochs.div_ceil(2),
                fine_epochs: epochs / 2,
                seed,
                ..GanSchedule::default()
            };
            let h = train_brushgan(&mut m, &data, &schedule)?;
            println!("coarse mse {:?}", h.coarse_mse);
            println!("fine loss {:?}", h.fine_loss);
            GeneratorModel::BrushGan(m)
        }
        Arch::Brushcldm => {
            let config = CldmConfig { side, context_channels: ctx, ..CldmConfig::default() };
            let mut m = BrushCldm::new(config, seed)?;
            let schedule = CldmSchedule {
                ae_epochs: epochs,
                denoise_epochs: epochs,
                finetune_epochs: (epochs / 5).max(1),
                seed,
                ..CldmSchedule::default()
            };
            let h = train_cldm(&mut m, &data, &schedule)?;
            println!("autoencoder loss {:?}", h.ae_loss);
            println!("denoise loss {:?}", h.denoise_loss);
            GeneratorModel::BrushCldm(m)
        }
    };
    save_checkpoint(&model, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn generate(model: &str, bundle_dir: &Path, chunk: Coord, mask: &Path, seed: u64, out_dir: &Path) -> Result<()> {
    let map = load_one(bundle_dir)?;
    let generator = load_generator(model)?;
    let brushed = BTreeMap::from([(chunk, read_mask(mask)?)]);
    let config = StitchConfig { seed, ..StitchConfig::default() };
    let outcome = generate_region(&map, &brushed, &generator, &config)?;
    let edited = outcome.map.chunk(chunk)?;
    std::fs::create_dir_all(out_dir)?;
    write_chunk_tiles(edited, out_dir)?;
    write_rgb(&blend_chunk(edited, &outcome.map.materials)?, &out_dir.join("render.png"))?;
    println!("wrote chunk {chunk} to {}", out_dir.display());
    Ok(())
}

fn stitch(
    bundle_dir: &Path,
    region: Region,
    mask_dir: &Path,
    model: &str,
    seed: u64,
    no_stitch: bool,
    report: &Path,
    out_bundle: Option<&Path>,
) -> Result<()> {
    let map = load_one(bundle_dir)?;
    let generator = load_generator(model)?;
    let mut brushed: BTreeMap<Coord, BrushMask> = BTreeMap::new();
    for (file, path) in png_files(mask_dir)? {
        let stem = file.trim_end_matches(".png").trim_end_matches(".PNG");
        let Ok(c) = stem.parse::<Coord>() else {
            log::warn!("skipping {file}: not named x_y.png");
            continue;
        };
        if (region.0.x..=region.1.x).contains(&c.x) && (region.0.y..=region.1.y).contains(&c.y) {
            brushed.insert(c, read_mask(&path)?);
        }
    }
    if brushed.is_empty() {
        bail!("no masks for region {}:{} in {}", region.0, region.1, mask_dir.display());
    }
    let config = StitchConfig { seed, stitch: !no_stitch, ..StitchConfig::default() };
    let outcome = generate_region(&map, &brushed, &generator, &config)?;
    write_json(report, &serde_json::json!({ "generator": generator.name(), "pairs": outcome.pairs }))?;
    for p in &outcome.pairs {
        println!("{} {}: seam {:.5} -> {:.5}", p.pair.a, p.pair.b, p.seam_before, p.seam_after);
    }
    if let Some(dir) = out_bundle {
        save_map_bundle(&outcome.map, dir)?;
    }
    Ok(())
}

#[tokio::main]
async fn serve(addr: SocketAddr, config: ServiceConfig) -> Result<()> {
    let state = AppState::new(config)?;
    smartbrush_service::serve(addr, state).await?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth { out_dir, maps, grid, tile_size, categories, seed } => {
            synth(&out_dir, maps, grid, tile_size, &categories, seed)
        }
        Command::SplitDataset { bundle_dir, per_category, out } => {
            let maps = load_bundles(&bundle_dir)?;
            let am = FeatureExtractor::random(3, SPLIT_AM_SEED);
            let tiles = FeatureExtractor::random(8, SPLIT_TILE_SEED);
            let split = propose_split(&maps, per_category, &am, &tiles)?;
            write_json(&out, &split)?;
            println!("train {:?}\ntest  {:?}", split.train, split.test);
            Ok(())
        }
        Command::Eval { pred_dir, gt_dir, bundle_dir, model, name, metrics, mask_mode, seed, out } => {
            let metrics: Metrics = metrics.parse()?;
            let modes = mask_mode.into_iter().map(MaskMode::from).collect();
            eval(pred_dir, gt_dir, bundle_dir, &model, name, metrics, modes, seed, &out)
        }
        Command::Train { arch, bundle_dir, epochs, seed, side, out } => {
            train(arch, &bundle_dir, epochs, seed, side, &out)
        }
        Command::Generate { model, bundle_dir, chunk, mask, seed, out_dir } => {
            generate(&model, &bundle_dir, chunk, &mask, seed, &out_dir)
        }
        Command::RankMaterials { bundle_dir, chunk, out } => {
            let map = load_one(&bundle_dir)?;
            let c = map.chunk(chunk)?;
            let (x0, y0) = (chunk.x as usize * map.tile_size, chunk.y as usize * map.tile_size);
            let region = map.global_am.crop(x0, y0, map.tile_size, map.tile_size);
            let ranking = rank_materials(c, &map.materials, &region)?;
            write_json(&out, &ranking)?;
            for e in &ranking.entries {
                println!("{:<12} {:.4}", e.material_id, e.score);
            }
            Ok(())
        }
        Command::Stitch { bundle_dir, region, mask_dir, model, seed, no_stitch, report, out_bundle } => {
            stitch(&bundle_dir, region, &mask_dir, &model, seed, no_stitch, &report, out_bundle.as_deref())
        }
        Command::Serve { port, host, bundle_root, export_root, model } => {
            let mut config = ServiceConfig::new(bundle_root);
            if let Some(e) = export_root {
                config.export_root = e;
            }
            config.models = model;
            serve(SocketAddr::new(host, port), config)
        }
    }
}
