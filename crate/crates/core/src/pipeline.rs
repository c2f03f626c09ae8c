//! End-to-end run: extract → reshuffle → blueprint → stage-2 stand-in → harmonize →
//! enhance → verify, with the configuration format shared by the command-line tool.
//!
//! Every stage works on 8-bit images so that each artifact written to disk is exactly
//! what the next stage consumed; running the stages one by one from saved files gives
//! the same bytes as a single run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{self, PerturbSpec};
use crate::idrs::{build_blueprint, face_mask_to_modules, reshuffle, Blueprint, RegionSets, ReshuffleOptions, ReshuffleReport};
use crate::idse::{enhance, harmonize_markers, read_fstats, simulated_readout, AestheticReference, LossConfig, TraceRow};
use crate::qr::{decode_message, EcLevel, MaskChoice, ModuleMatrix, QrSpec};
use crate::raster::GrayImage;
use crate::scanner::{count_errors, extract_modules, GridGeometry};
use crate::synth;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QrSection {
    pub version: u8,
    pub ec_level: EcLevel,
    pub quiet_zone: usize,
    /// Fixed mask pattern; absent means the reshuffle picks the best of all eight.
    pub mask: Option<u8>,
}

impl Default for QrSection {
    fn default() -> Self {
        let d = QrSpec::default();
        QrSection { version: d.version, ec_level: d.ec_level, quiet_zone: d.quiet_zone, mask: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Source portrait. Without it a synthetic portrait and mask are generated.
    pub source: Option<PathBuf>,
    pub face_mask: Option<PathBuf>,
    /// Externally regenerated stage-2 image; replaces the blend stand-in.
    pub stage2: Option<PathBuf>,
    /// `.fstats` file replacing the built-in aesthetic reference statistics.
    pub reference_stats: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection { source: None, face_mask: None, stage2: None, reference_stats: None, out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlueprintSection {
    pub sub_square_ratio: f64,
    /// Fraction of a module the face mask must cover for it to count as face.
    pub coverage: f64,
}

impl Default for BlueprintSection {
    fn default() -> Self {
        BlueprintSection { sub_square_ratio: 1.0 / 3.0, coverage: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReshuffleSection {
    pub optimize_pad_bits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Section {
    /// Blueprint weight of the stand-in `blend · blueprint + (1 − blend) · source`.
    pub blend: f64,
}

impl Default for Stage2Section {
    fn default() -> Self {
        Stage2Section { blend: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    /// Pixels per module of the synthetic portrait used when no source is given.
    pub module_size: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection { module_size: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    pub trials: usize,
    pub scales: Vec<f64>,
    pub tilts: Vec<f64>,
    pub blurs: Vec<f64>,
    pub noise_sigma: f64,
    pub brightness_offset: f64,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection {
            trials: 50,
            scales: vec![0.3, 0.5, 1.0],
            tilts: vec![0.0, 45.0],
            blurs: vec![0.0, 0.75, 1.5],
            noise_sigma: 2.0,
            brightness_offset: 0.0,
        }
    }
}

impl HarnessSection {
    pub fn grid(&self) -> Vec<PerturbSpec> {
        let mut grid = Vec::new();
        for &scale in &self.scales {
            for &tilt_degrees in &self.tilts {
                for &blur_sigma in &self.blurs {
                    grid.push(PerturbSpec {
                        scale,
                        tilt_degrees,
                        blur_sigma,
                        noise_sigma: self.noise_sigma,
                        brightness_offset: self.brightness_offset,
                        seed: 0,
                    });
                }
            }
        }
        grid
    }
}

/// Full run configuration. On disk it is a flat list of `dotted.key = value` lines
/// (TOML syntax); see [`PipelineConfig::parse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub message: String,
    pub seed: u64,
    pub qr: QrSection,
    pub paths: PathsSection,
    pub loss: LossConfig,
    pub blueprint: BlueprintSection,
    pub reshuffle: ReshuffleSection,
    pub stage2: Stage2Section,
    pub sample: SampleSection,
    pub harness: HarnessSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            message: "https://example.org/".into(),
            seed: 0,
            qr: QrSection::default(),
            paths: PathsSection::default(),
            loss: LossConfig::default(),
            blueprint: BlueprintSection::default(),
            reshuffle: ReshuffleSection::default(),
            stage2: Stage2Section::default(),
            sample: SampleSection::default(),
            harness: HarnessSection::default(),
        }
    }
}

/// Keys whose values are taken verbatim, never parsed as numbers or booleans.
fn is_string_key(key: &str) -> bool {
    key == "message" || key.starts_with("paths.")
}

fn override_value(key: &str, raw: &str) -> toml::Value {
    if is_string_key(key) {
        return toml::Value::String(raw.to_string());
    }
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut String) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            leaf => out.push_str(&format!("{key} = {leaf}\n")),
        }
    }
}

impl PipelineConfig {
    /// Parse config text, then apply `overrides` (`dotted.key`, raw value); overrides win.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        for (key, raw) in overrides {
            let mut parts: Vec<&str> = key.split('.').collect();
            let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| Error::Parameter(format!("bad key {key:?}")))?;
            let mut node = &mut table;
            for p in parts {
                let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
                node = entry.as_table_mut().ok_or_else(|| Error::Parameter(format!("{key:?}: {p} is not a section")))?;
            }
            node.insert(leaf.to_string(), override_value(key, raw));
        }
        let cfg: PipelineConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Parameter(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file (or start from defaults) and apply overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    /// Flat `dotted.key = value` text that [`PipelineConfig::parse`] reads back unchanged.
    pub fn to_text(&self) -> Result<String> {
        let table = toml::Table::try_from(self).map_err(|e| Error::Format(format!("config: {e}")))?;
        let mut out = String::new();
        flatten("", &table, &mut out);
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec().validate()?;
        self.loss.validate()?;
        let b = &self.blueprint;
        if !(b.sub_square_ratio > 0.0 && b.sub_square_ratio <= 1.0) {
            return Err(Error::Parameter("blueprint.sub_square_ratio outside (0, 1]".into()));
        }
        if !(b.coverage > 0.0 && b.coverage <= 1.0) {
            return Err(Error::Parameter("blueprint.coverage outside (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.stage2.blend) {
            return Err(Error::Parameter("stage2.blend outside [0, 1]".into()));
        }
        if matches!(self.qr.mask, Some(m) if m > 7) {
            return Err(Error::Parameter("qr.mask outside 0-7".into()));
        }
        for spec in self.harness.grid() {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn spec(&self) -> QrSpec {
        QrSpec {
            version: self.qr.version,
            ec_level: self.qr.ec_level,
            mask: self.qr.mask.map_or(MaskChoice::Auto, MaskChoice::Fixed),
            quiet_zone: self.qr.quiet_zone,
        }
    }
}

/// Resample `img` to the exact grid of `spec`: side `a·(n + 2·quiet)` with
/// `a = round(width / (n + 2·quiet))`.
pub fn resample_to_grid(img: &GrayImage, spec: &QrSpec) -> Result<(GrayImage, GridGeometry)> {
    let a = GridGeometry::module_size_for_width(img.width(), spec);
    let geom = GridGeometry::for_spec(spec, a)?;
    Ok((resample_to(img, geom.image_side()), geom))
}

fn resample_to(img: &GrayImage, side: usize) -> GrayImage {
    if img.width() == side && img.height() == side {
        return img.quantized();
    }
    let s = side as u32;
    GrayImage::from_luma8(&image::imageops::resize(&img.to_luma8(), s, s, image::imageops::FilterType::Triangle))
}

/// Source portrait and face mask on the exact grid.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub source: GrayImage,
    pub face_mask: GrayImage,
    pub geometry: GridGeometry,
}

/// Load and resample the configured inputs, or synthesize the sample portrait and its
/// elliptical mask (seeded by `config.seed`) when no source is configured.
pub fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let spec = config.spec();
    match (&config.paths.source, &config.paths.face_mask) {
        (Some(src), Some(mask)) => {
            let (source, geometry) = resample_to_grid(&GrayImage::load(src)?, &spec)?;
            let face_mask = resample_to(&GrayImage::load(mask)?, geometry.image_side());
            Ok(Inputs { source, face_mask, geometry })
        }
        (None, None) => {
            let geometry = GridGeometry::for_spec(&spec, config.sample.module_size)?;
            let face = synth::Ellipse::default_face(spec.side());
            let source = synth::portrait(&geometry, &face, config.seed).quantized();
            let face_mask = synth::elliptical_mask(&geometry, &face);
            Ok(Inputs { source, face_mask, geometry })
        }
        _ => Err(Error::Parameter("paths.source and paths.face_mask must be given together".into())),
    }
}

/// Geometry of an image that is already on the grid of `spec`.
pub fn grid_of(img: &GrayImage, spec: &QrSpec) -> Result<GridGeometry> {
    let geom = GridGeometry::for_spec(spec, GridGeometry::module_size_for_width(img.width(), spec))?;
    geom.check(img)?;
    Ok(geom)
}

pub fn regions_from_mask(mask: &GrayImage, geom: &GridGeometry, config: &PipelineConfig) -> Result<RegionSets> {
    RegionSets::new(&config.spec(), face_mask_to_modules(mask, geom, config.blueprint.coverage)?)
}

pub fn reshuffle_stage(e: &ModuleMatrix, regions: &RegionSets, config: &PipelineConfig) -> Result<(ModuleMatrix, ReshuffleReport)> {
    let options = ReshuffleOptions { mask: config.qr.mask, optimize_pad_bits: config.reshuffle.optimize_pad_bits };
    reshuffle(e, config.message.as_bytes(), regions, &config.spec(), options)
}

/// Stage-2 image: the external one when configured, else the blend stand-in.
pub fn stage2_stage(blueprint: &Blueprint, source: &GrayImage, config: &PipelineConfig) -> Result<GrayImage> {
    match &config.paths.stage2 {
        Some(p) => Ok(resample_to(&GrayImage::load(p)?, blueprint.geometry.image_side())),
        None => Ok(synth::blend(&blueprint.image, source, config.stage2.blend).quantized()),
    }
}

/// Marker harmonization followed by rounding away from the threshold on marker pixels, so
/// the 8-bit result still satisfies the margin.
pub fn harmonize_stage(image: &GrayImage, blueprint: &Blueprint, config: &PipelineConfig) -> Result<GrayImage> {
    let (geom, target, markers) = (&blueprint.geometry, &blueprint.target_matrix, &blueprint.regions.markers);
    let out = harmonize_markers(image, geom, target, markers, config.loss.tau, config.loss.lambda)?;
    let mut directed = out.quantized();
    for &k in markers {
        let light = target.at(k) == 1;
        geom.for_each_pixel(k, |x, y, _| {
            let v = out.get(x, y);
            directed.set(x, y, if light { v.ceil() } else { v.floor() });
        });
    }
    Ok(directed)
}

pub fn reference_for(harmonized: &GrayImage, config: &PipelineConfig) -> Result<AestheticReference> {
    Ok(match &config.paths.reference_stats {
        Some(p) => AestheticReference::Stats(read_fstats(p)?.1),
        None => AestheticReference::Image(harmonized.clone()),
    })
}

/// Outcome of checking an enhanced image against its blueprint and message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    /// The simulated readout decodes to the expected message.
    pub passed: bool,
    pub decoded_message: Option<String>,
    pub failure: Option<String>,
    pub e: usize,
    pub e_f: usize,
    pub per_block_errors: Vec<usize>,
    /// The locate-and-decode path on the unperturbed image also yields the message.
    pub located_scan: bool,
}

pub fn verify_stage(image: &GrayImage, blueprint: &Blueprint, message: &[u8], loss: &LossConfig) -> Result<VerifyReport> {
    let spec = blueprint.spec()?;
    let read = simulated_readout(image, blueprint, loss)?;
    let errors = count_errors(&read, &blueprint.target_matrix, &blueprint.regions, &spec)?;
    let (decoded_message, failure, passed) = match decode_message(&read, &spec) {
        Ok(bytes) => {
            let ok = bytes == message;
            let text = String::from_utf8_lossy(&bytes).into_owned();
            (Some(text), (!ok).then(|| "decoded message differs".to_string()), ok)
        }
        Err(e) => (None, Some(e.to_string()), false),
    };
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        passed,
        decoded_message,
        failure,
        e: errors.e,
        e_f: errors.e_f,
        per_block_errors: errors.per_block_errors,
        located_scan: harness::scan_trial(image, &spec, message),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceSummary {
    pub iterations: usize,
    pub stopped_early: bool,
    pub initial: TraceRow,
    pub last: TraceRow,
}

/// Summary of a full run, written as `pipeline.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub message: String,
    pub module_size: usize,
    pub face_modules: usize,
    pub reshuffle: ReshuffleReport,
    pub enhance: EnhanceSummary,
    pub verify: VerifyReport,
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// File names of the artifacts in the output directory.
pub mod artifact {
    pub const SOURCE: &str = "source.png";
    pub const FACE_MASK: &str = "face_mask.png";
    pub const MODULES: &str = "modules.json";
    pub const TARGET: &str = "target.json";
    pub const RESHUFFLE: &str = "reshuffle.json";
    pub const BLUEPRINT_STEM: &str = "blueprint";
    pub const STAGE2: &str = "stage2.png";
    pub const HARMONIZED: &str = "harmonized.png";
    pub const OUTPUT: &str = "output.png";
    pub const TRACE: &str = "trace.jsonl";
    pub const VERIFY: &str = "verify.json";
    pub const REPORT: &str = "pipeline.json";
    pub const CONFIG: &str = "config.txt";
}

/// Run every stage, writing artifacts into `out_dir`. An infeasible reshuffle writes its
/// report and returns [`Error::Infeasible`]; a failed verification is reported through
/// `verify.passed`.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineReport> {
    use artifact::*;
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(CONFIG), config.to_text()?)?;

    let inputs = load_inputs(config)?;
    let geom = inputs.geometry;
    inputs.source.save(out_dir.join(SOURCE))?;
    inputs.face_mask.save(out_dir.join(FACE_MASK))?;

    let extracted = extract_modules(&inputs.source, &geom, config.loss.tau)?;
    write_json(out_dir.join(MODULES), &extracted)?;
    let regions = regions_from_mask(&inputs.face_mask, &geom, config)?;
    let (target, reshuffle_report) = match reshuffle_stage(&extracted, &regions, config) {
        Ok(r) => r,
        Err(Error::Infeasible(report)) => {
            write_json(out_dir.join(RESHUFFLE), &report)?;
            return Err(Error::Infeasible(report));
        }
        Err(e) => return Err(e),
    };
    write_json(out_dir.join(TARGET), &target)?;
    write_json(out_dir.join(RESHUFFLE), &reshuffle_report)?;

    let blueprint = build_blueprint(&inputs.source, &target, &regions, &geom, config.blueprint.sub_square_ratio)?;
    blueprint.save(out_dir, BLUEPRINT_STEM)?;
    let stage2 = stage2_stage(&blueprint, &inputs.source, config)?;
    stage2.save(out_dir.join(STAGE2))?;
    let harmonized = harmonize_stage(&stage2, &blueprint, config)?;
    harmonized.save(out_dir.join(HARMONIZED))?;

    let outcome = enhance(&harmonized, &blueprint, &reference_for(&harmonized, config)?, &config.loss)?;
    outcome.image.save(out_dir.join(OUTPUT))?;
    outcome.write_trace(fs::File::create(out_dir.join(TRACE))?)?;

    let verify = verify_stage(&outcome.image, &blueprint, config.message.as_bytes(), &config.loss)?;
    write_json(out_dir.join(VERIFY), &verify)?;
    let report = PipelineReport {
        schema_version: SCHEMA_VERSION,
        message: config.message.clone(),
        module_size: geom.module_size,
        face_modules: regions.face.len(),
        reshuffle: reshuffle_report,
        enhance: EnhanceSummary {
            iterations: outcome.trace.len() - 1,
            stopped_early: outcome.stopped_early,
            initial: outcome.trace[0].clone(),
            last: outcome.final_row().clone(),
        },
        verify,
    };
    write_json(out_dir.join(REPORT), &report)?;
    Ok(report)
}
