use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use portraitqr::harness::{robustness_report, ScanCase};
use portraitqr::idrs::build_blueprint;
use portraitqr::idse::{enhance, read_fstats, AestheticReference};
use portraitqr::pipeline::{self, artifact, PipelineConfig, SCHEMA_VERSION};
use portraitqr::qr::build_matrix;
use portraitqr::scanner::{extract_modules, render, GridGeometry};
use portraitqr::{Blueprint, Error, GrayImage, ModuleMatrix};

#[derive(Parser)]
#[command(name = "portraitqr", version, about = "Face-preserving QR codes: reshuffle, blueprint, enhance, verify")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `dotted.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (config key `paths.out_dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for the synthetic sample and robustness trials (config key `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the report as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Override any config key, e.g. `--set loss.tau=120`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Message to encode (config key `message`).
    #[arg(long, global = true)]
    message: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a plain QR symbol for the message.
    Encode {
        /// Pixels per module; defaults to `sample.module_size`.
        #[arg(long)]
        module_size: Option<usize>,
    },
    /// Read the module matrix of an image by thresholding module means.
    Extract {
        /// Image to read; defaults to `paths.source`.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Rebuild the code around the face modules of an extracted matrix.
    Reshuffle {
        #[arg(long)]
        modules: PathBuf,
        /// Defaults to `paths.face_mask`.
        #[arg(long)]
        face_mask: Option<PathBuf>,
    },
    /// Combine the source texture with the target bits.
    Blueprint {
        #[arg(long)]
        target: PathBuf,
        /// Defaults to `paths.source`.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Defaults to `paths.face_mask`.
        #[arg(long)]
        face_mask: Option<PathBuf>,
    },
    /// Push finder, alignment and other function modules past the threshold margin.
    Harmonize {
        /// Stage-2 image; defaults to the blend stand-in of blueprint and source.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        blueprint: PathBuf,
        /// Source for the blend stand-in; defaults to `paths.source`.
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Optimize an image until the simulated decoder reads the blueprint's target.
    Enhance {
        #[arg(long)]
        start: PathBuf,
        #[arg(long)]
        blueprint: PathBuf,
        /// Aesthetic reference, an image or an `.fstats` file; defaults to the start image.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Decode an image against its blueprint and count module errors.
    Verify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        blueprint: PathBuf,
    },
    /// Scan-success rates over the perturbation grid.
    Robustness {
        #[arg(long)]
        image: PathBuf,
        /// Trials per grid cell (config key `harness.trials`).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run every stage end to end.
    Pipeline {
        /// Config key `paths.source`.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Config key `paths.face_mask`.
        #[arg(long)]
        face_mask: Option<PathBuf>,
        /// Externally regenerated stage-2 image (config key `paths.stage2`).
        #[arg(long)]
        stage2: Option<PathBuf>,
        /// `.fstats` reference statistics (config key `paths.reference_stats`).
        #[arg(long)]
        reference_stats: Option<PathBuf>,
    },
}

/// What a command produced: a JSON report and whether the stage succeeded.
struct Outcome {
    report: Value,
    summary: String,
    ok: bool,
}

fn ok(report: Value, summary: String) -> Outcome {
    Outcome { report, summary, ok: true }
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for kv in &cli.common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parameter(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    push("paths.out_dir", path(&cli.common.out_dir));
    push("seed", cli.common.seed.map(|s| s.to_string()));
    push("message", cli.common.message.clone());
    match &cli.command {
        Command::Pipeline { source, face_mask, stage2, reference_stats } => {
            push("paths.source", path(source));
            push("paths.face_mask", path(face_mask));
            push("paths.stage2", path(stage2));
            push("paths.reference_stats", path(reference_stats));
        }
        Command::Robustness { trials, .. } => push("harness.trials", trials.map(|t| t.to_string())),
        _ => {}
    }
    Ok(out)
}

fn required(flag: Option<&PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, Error> {
    flag.or(fallback.as_ref())
        .cloned()
        .ok_or_else(|| Error::Parameter(format!("missing --{name} (or its config key)")))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn with_schema(mut v: Value, command: &str) -> Value {
    if let Value::Object(map) = &mut v {
        map.insert("schema_version".into(), json!(SCHEMA_VERSION));
        map.insert("command".into(), json!(command));
    }
    v
}

fn run(cli: &Cli, cfg: &PipelineConfig) -> Result<Outcome, Error> {
    let out_dir = cfg.paths.out_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let spec = cfg.spec();
    let message = cfg.message.as_bytes();
    match &cli.command {
        Command::Encode { module_size } => {
            let a = module_size.unwrap_or(cfg.sample.module_size);
            let geom = GridGeometry::for_spec(&spec, a)?;
            let matrix = build_matrix(message, &spec)?;
            let path = out_dir.join("code.png");
            render(&matrix, &geom).save(&path)?;
            pipeline::write_json(out_dir.join("code.json"), &matrix)?;
            let report = json!({ "side": spec.side(), "module_size": a, "image": path });
            Ok(ok(with_schema(report, "encode"), format!("wrote {}", path.display())))
        }
        Command::Extract { image } => {
            let path = required(image.as_ref(), &cfg.paths.source, "image")?;
            let (img, geom) = pipeline::resample_to_grid(&GrayImage::load(&path)?, &spec)?;
            let matrix = extract_modules(&img, &geom, cfg.loss.tau)?;
            let target = out_dir.join(artifact::MODULES);
            pipeline::write_json(&target, &matrix)?;
            let light = matrix.values().iter().filter(|&&v| v == 1).count();
            let report = json!({ "side": matrix.n(), "module_size": geom.module_size, "light_modules": light, "modules": target });
            Ok(ok(with_schema(report, "extract"), format!("{} light of {} modules", light, matrix.values().len())))
        }
        Command::Reshuffle { modules, face_mask } => {
            let e: ModuleMatrix = read_json(modules)?;
            let mask_path = required(face_mask.as_ref(), &cfg.paths.face_mask, "face-mask")?;
            let (mask, geom) = pipeline::resample_to_grid(&GrayImage::load(&mask_path)?, &spec)?;
            let regions = pipeline::regions_from_mask(&mask, &geom, cfg)?;
            match pipeline::reshuffle_stage(&e, &regions, cfg) {
                Ok((target, report)) => {
                    pipeline::write_json(out_dir.join(artifact::TARGET), &target)?;
                    pipeline::write_json(out_dir.join(artifact::RESHUFFLE), &report)?;
                    let summary = format!("feasible, mask {}, slack {}", report.mask_pattern_chosen, report.slack);
                    Ok(ok(with_schema(json!({ "reshuffle": report }), "reshuffle"), summary))
                }
                Err(Error::Infeasible(report)) => {
                    pipeline::write_json(out_dir.join(artifact::RESHUFFLE), &report)?;
                    Err(Error::Infeasible(report))
                }
                Err(e) => Err(e),
            }
        }
        Command::Blueprint { target, source, face_mask } => {
            let target: ModuleMatrix = read_json(target)?;
            let (source, geom) =
                pipeline::resample_to_grid(&GrayImage::load(required(source.as_ref(), &cfg.paths.source, "source")?)?, &spec)?;
            let mask_path = required(face_mask.as_ref(), &cfg.paths.face_mask, "face-mask")?;
            let (mask, _) = pipeline::resample_to_grid(&GrayImage::load(&mask_path)?, &spec)?;
            let regions = pipeline::regions_from_mask(&mask, &geom, cfg)?;
            let bp = build_blueprint(&source, &target, &regions, &geom, cfg.blueprint.sub_square_ratio)?;
            bp.save(&out_dir, artifact::BLUEPRINT_STEM)?;
            let report = json!({ "module_size": geom.module_size, "face_modules": regions.face.len() });
            Ok(ok(with_schema(report, "blueprint"), format!("wrote {}", out_dir.join("blueprint.png").display())))
        }
        Command::Harmonize { image, blueprint, source } => {
            let bp = Blueprint::load(blueprint)?;
            let stage2 = match image {
                Some(p) => pipeline::stage2_stage(&bp, &GrayImage::new(0, 0, 0.0), &with_stage2(cfg, p))?,
                None => {
                    let src = required(source.as_ref(), &cfg.paths.source, "source")?;
                    let (src, _) = pipeline::resample_to_grid(&GrayImage::load(src)?, &spec)?;
                    let img = pipeline::stage2_stage(&bp, &src, cfg)?;
                    img.save(out_dir.join(artifact::STAGE2))?;
                    img
                }
            };
            let h = pipeline::harmonize_stage(&stage2, &bp, cfg)?;
            let path = out_dir.join(artifact::HARMONIZED);
            h.save(&path)?;
            Ok(ok(with_schema(json!({ "image": path }), "harmonize"), format!("wrote {}", path.display())))
        }
        Command::Enhance { start, blueprint, reference } => {
            let bp = Blueprint::load(blueprint)?;
            let start_img = GrayImage::load(start)?;
            let reference = match reference {
                Some(p) if p.extension().is_some_and(|e| e == "fstats") => AestheticReference::Stats(read_fstats(p)?.1),
                Some(p) => AestheticReference::Image(GrayImage::load(p)?),
                None => AestheticReference::Image(start_img.clone()),
            };
            let outcome = enhance(&start_img, &bp, &reference, &cfg.loss)?;
            outcome.image.save(out_dir.join(artifact::OUTPUT))?;
            outcome.write_trace(fs::File::create(out_dir.join(artifact::TRACE))?)?;
            let last = outcome.final_row().clone();
            let summary = format!("{} iterations, e = {}, e_f = {}", outcome.trace.len() - 1, last.e, last.e_f);
            let report = json!({
                "iterations": outcome.trace.len() - 1,
                "stopped_early": outcome.stopped_early,
                "initial": outcome.trace[0],
                "last": last,
            });
            Ok(ok(with_schema(report, "enhance"), summary))
        }
        Command::Verify { image, blueprint } => {
            let bp = Blueprint::load(blueprint)?;
            let v = pipeline::verify_stage(&GrayImage::load(image)?, &bp, message, &cfg.loss)?;
            pipeline::write_json(out_dir.join(artifact::VERIFY), &v)?;
            let summary = match &v.failure {
                None => format!("decoded, e = {}, e_f = {}", v.e, v.e_f),
                Some(f) => format!("verify failed: {f} (e = {})", v.e),
            };
            Ok(Outcome { ok: v.passed, report: serde_json::to_value(&v)?, summary })
        }
        Command::Robustness { image, .. } => {
            let img = GrayImage::load(image)?;
            let cases = [ScanCase { image: &img, expected: message }];
            let r = robustness_report(&cases, &spec, &cfg.harness.grid(), cfg.harness.trials, cfg.seed)?;
            pipeline::write_json(out_dir.join("robustness.json"), &r)?;
            let table = r.table();
            fs::write(out_dir.join("robustness.txt"), &table)?;
            Ok(ok(serde_json::to_value(&r)?, table.trim_end().to_string()))
        }
        Command::Pipeline { .. } => {
            let r = pipeline::run_pipeline(cfg, &out_dir)?;
            let v = &r.verify;
            let summary = match &v.failure {
                None => format!("decoded, e = {}, e_f = {}, artifacts in {}", v.e, v.e_f, out_dir.display()),
                Some(f) => format!("verify failed: {f} (e = {})", v.e),
            };
            Ok(Outcome { ok: v.passed, report: serde_json::to_value(&r)?, summary })
        }
    }
}

fn with_stage2(cfg: &PipelineConfig, path: &Path) -> PipelineConfig {
    let mut c = cfg.clone();
    c.paths.stage2 = Some(path.to_path_buf());
    c
}

/// 1 for a stage that ran and failed, 2 for bad input.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) | Error::Decode { .. } | Error::Uncorrectable | Error::Location(_) | Error::NonFinite { .. } => 1,
        _ => 2,
    }
}

fn error_report(e: &Error) -> Value {
    let kind = match e {
        Error::Infeasible(_) => "infeasible",
        Error::Decode { .. } | Error::Uncorrectable => "decode",
        Error::Location(_) => "location",
        Error::NonFinite { .. } => "non_finite",
        Error::Capacity { .. } => "capacity",
        Error::Parameter(_) => "usage",
        Error::Format(_) | Error::Json(_) => "format",
        Error::Io(_) | Error::Image(_) => "io",
    };
    let mut v = json!({ "schema_version": SCHEMA_VERSION, "status": "error", "reason": kind, "detail": e.to_string() });
    if let Error::Infeasible(report) = e {
        v["reshuffle"] = serde_json::to_value(report).unwrap_or(Value::Null);
    }
    v
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = overrides(&cli)
        .and_then(|o| PipelineConfig::load(cli.common.config.as_deref(), &o))
        .and_then(|cfg| run(&cli, &cfg));
    match result {
        Ok(outcome) => {
            if cli.common.json {
                println!("{}", outcome.report);
            } else {
                println!("{}", outcome.summary);
            }
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            if cli.common.json {
                println!("{}", error_report(&e));
            }
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
