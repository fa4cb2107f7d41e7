use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use motas::augment::{
    merge_augmented, plan_pairs, read_plan, run_asr_jobs, run_tts_jobs, write_failures, write_plan, CohortItem,
    ExternalToolConfig, JobReport,
};
use motas::harness::{
    ablation_csv, curve_points, emit_curve, evaluate, extract_features, parse_manifest, read_results_dir,
    resolve_samples, run_ablation, run_experiment, write_manifest, write_synthetic_cohort, AudioFeature, CacheSet,
    CohortSpec, ExperimentConfig, GridSpec, ManifestRecord, Split, SEED_ENV,
};
use motas::model::Model;
use motas::{Error, Result};

#[derive(Parser)]
#[command(name = "motas", version, about = "Multimodal speech screening experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment audio and write MFCC or spectrogram rows to a feature cache.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        feature: FeatureArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_cache: PathBuf,
    },
    /// Plan intra-class voice/transcript pairs for one augmentation factor.
    PlanAug {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        factor: f64,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the external TTS command for each planned pair.
    RunTts {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Template with {voice_audio}, {text} and {out} placeholders.
        #[arg(long)]
        cmd: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Synthetic items; defaults to <out-dir>/synthetic.jsonl.
        #[arg(long)]
        out_manifest: Option<PathBuf>,
        #[command(flatten)]
        tool: ToolArgs,
    },
    /// Transcribe every record with the external ASR command.
    RunAsr {
        #[arg(long)]
        manifest: PathBuf,
        /// Template with {audio} and {out} placeholders.
        #[arg(long)]
        cmd: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Updated manifest; defaults to <out-dir>/manifest.jsonl.
        #[arg(long)]
        out_manifest: Option<PathBuf>,
        #[command(flatten)]
        tool: ToolArgs,
    },
    /// Union real and synthetic manifests into one training manifest.
    Merge {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train once per seed and evaluate on the test records.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        caches: PathBuf,
        /// Test records; defaults to the split=test records of --manifest.
        #[arg(long)]
        test_manifest: Option<PathBuf>,
        #[arg(long)]
        test_caches: Option<PathBuf>,
        #[arg(long)]
        val_fraction: Option<f64>,
        /// Checkpoint of the first seed's model.
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_result: PathBuf,
    },
    /// Score a saved model on the test records of a manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        caches: PathBuf,
        /// Source of threshold and aggregation settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_report: PathBuf,
        /// Per-subject predictions as JSON lines.
        #[arg(long)]
        out_predictions: Option<PathBuf>,
    },
    /// Run the factor × MoE grid and write one CSV row per cell.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        /// Also write each cell's full result as JSON here.
        #[arg(long)]
        results_dir: Option<PathBuf>,
    },
    /// Accuracy against augmentation factor from a directory of results.
    Curve {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Write a synthetic cohort with caches, augmented manifests and a grid.
    SynthCohort {
        #[arg(long)]
        out: PathBuf,
        /// JSON cohort spec; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FeatureArg {
    Mfcc,
    Spec,
}

#[derive(Args)]
struct ToolArgs {
    /// Seconds per invocation (MOTAS_TOOL_TIMEOUT_S overrides).
    #[arg(long, default_value_t = 600.0)]
    timeout_s: f64,
    #[arg(long, default_value_t = 1)]
    max_retries: u32,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Failure report; defaults to <out-dir>/failures.jsonl.
    #[arg(long)]
    failures: Option<PathBuf>,
    /// Exit with status 3 when more records than this fail.
    #[arg(long)]
    max_failures: Option<usize>,
}

impl ToolArgs {
    fn config(&self, tts: Option<&str>, asr: Option<&str>) -> ExternalToolConfig {
        ExternalToolConfig {
            tts_command_template: tts.map(str::to_owned),
            asr_command_template: asr.map(str::to_owned),
            timeout_s: self.timeout_s,
            max_retries: self.max_retries,
            workers: self.workers,
        }
    }
}

enum Outcome {
    Done,
    BudgetExceeded,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env()?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn split_records(records: Vec<ManifestRecord>, split: Split) -> Vec<ManifestRecord> {
    records.into_iter().filter(|r| r.split == split).collect()
}

fn finish_jobs(report: &JobReport, out_dir: &Path, tool: &ToolArgs) -> Result<Outcome> {
    let path = tool.failures.clone().unwrap_or_else(|| out_dir.join("failures.jsonl"));
    write_failures(&report.failures, &path)?;
    eprintln!(
        "{} succeeded, {} failed (report: {})",
        report.items.len(),
        report.failures.len(),
        path.display()
    );
    Ok(match tool.max_failures {
        Some(max) if report.failures.len() > max => Outcome::BudgetExceeded,
        _ => Outcome::Done,
    })
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Extract {
            manifest,
            feature,
            config,
            out_cache,
        } => {
            let cfg = load_config(config.as_deref())?;
            let feature = match feature {
                FeatureArg::Mfcc => AudioFeature::Mfcc,
                FeatureArg::Spec => AudioFeature::Spec,
            };
            let records = parse_manifest(&manifest)?;
            let (cache, summary) = extract_features(&records, feature, &cfg)?;
            cache.write(&out_cache)?;
            eprintln!("{}", serde_json::to_string(&summary)?);
        }
        Command::PlanAug {
            manifest,
            factor,
            seed,
            out,
        } => {
            let records = split_records(parse_manifest(&manifest)?, Split::Train);
            let cohort: Vec<CohortItem> = records.into_iter().map(|r| r.item).collect();
            let plan = plan_pairs(&cohort, factor, seed)?;
            write_plan(&plan, &out)?;
            eprintln!("planned {} synthetic items", plan.records.len());
        }
        Command::RunTts {
            plan,
            manifest,
            cmd,
            out_dir,
            out_manifest,
            tool,
        } => {
            let plan = read_plan(&plan)?;
            let cohort: Vec<CohortItem> = parse_manifest(&manifest)?.into_iter().map(|r| r.item).collect();
            let report = run_tts_jobs(&plan, &cohort, &tool.config(Some(&cmd), None), &out_dir)?;
            let records: Vec<ManifestRecord> = report
                .items
                .iter()
                .map(|i| ManifestRecord::new(i.clone(), Split::Train))
                .collect();
            write_manifest(&records, out_manifest.unwrap_or_else(|| out_dir.join("synthetic.jsonl")))?;
            return finish_jobs(&report, &out_dir, &tool);
        }
        Command::RunAsr {
            manifest,
            cmd,
            out_dir,
            out_manifest,
            tool,
        } => {
            let mut records = parse_manifest(&manifest)?;
            let items: Vec<CohortItem> = records.iter().map(|r| r.item.clone()).collect();
            let report = run_asr_jobs(&items, &tool.config(None, Some(&cmd)), &out_dir)?;
            let updated: HashMap<&str, &CohortItem> = report.items.iter().map(|i| (i.id.as_str(), i)).collect();
            for r in &mut records {
                if let Some(i) = updated.get(r.id()) {
                    r.item = (*i).clone();
                }
            }
            write_manifest(&records, out_manifest.unwrap_or_else(|| out_dir.join("manifest.jsonl")))?;
            return finish_jobs(&report, &out_dir, &tool);
        }
        Command::Merge { real, synthetic, out } => {
            let real = parse_manifest(&real)?;
            let mut syn = Vec::new();
            for p in &synthetic {
                syn.extend(parse_manifest(p)?);
            }
            let real_items: Vec<CohortItem> = real.iter().map(|r| r.item.clone()).collect();
            let syn_items: Vec<CohortItem> = syn.iter().map(|r| r.item.clone()).collect();
            let merged = merge_augmented(&real_items, &syn_items)?;
            let by_id: HashMap<&str, &ManifestRecord> = real.iter().chain(&syn).map(|r| (r.id(), r)).collect();
            let records: Vec<ManifestRecord> = merged
                .items
                .iter()
                .map(|i| ManifestRecord {
                    item: i.clone(),
                    ..by_id[i.id.as_str()].clone()
                })
                .collect();
            write_manifest(&records, &out)?;
            eprintln!(
                "{} (excluded invalid: {})",
                serde_json::to_string(&merged.summary)?,
                merged.excluded_invalid
            );
        }
        Command::Train {
            config,
            manifest,
            caches,
            test_manifest,
            test_caches,
            val_fraction,
            out_model,
            out_result,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(v) = val_fraction {
                cfg.val_fraction = v;
                cfg.validate()?;
            }
            let records = parse_manifest(&manifest)?;
            let test_records = match &test_manifest {
                Some(p) => split_records(parse_manifest(p)?, Split::Test),
                None => split_records(records.clone(), Split::Test),
            };
            if test_records.is_empty() {
                return Err(Error::Validation(
                    "no split=test records to evaluate; pass --test-manifest".into(),
                ));
            }
            let train_records = split_records(records, Split::Train);
            let mut cache_set = CacheSet::new(&caches);
            let train = resolve_samples(&train_records, &mut cache_set, &cfg.model)?;
            let mut test_set = CacheSet::new(test_caches.as_ref().unwrap_or(&caches));
            let test = resolve_samples(&test_records, &mut test_set, &cfg.model)?;
            let (result, model) = run_experiment(&cfg, &train, &test)?;
            model.save(&out_model)?;
            write_json(&result, &out_result)?;
            eprintln!(
                "accuracy {:.4} ± {:.4} over {} seeds",
                result.averaged.mean.accuracy, result.averaged.sd.accuracy, result.averaged.runs
            );
        }
        Command::Eval {
            model,
            manifest,
            caches,
            config,
            out_report,
            out_predictions,
        } => {
            let cfg = load_config(config.as_deref())?;
            let model = Model::load(&model)?;
            let records = parse_manifest(&manifest)?;
            let test_records = if records.iter().any(|r| r.split == Split::Test) {
                split_records(records, Split::Test)
            } else {
                records
            };
            let samples = resolve_samples(&test_records, &mut CacheSet::new(&caches), &model.config)?;
            let ev = evaluate(&model, &samples, &cfg)?;
            write_json(&ev.report, &out_report)?;
            if let Some(p) = out_predictions {
                let mut s = String::new();
                for pred in &ev.predictions {
                    s.push_str(&serde_json::to_string(pred)?);
                    s.push('\n');
                }
                write_text(&s, &p)?;
            }
            eprintln!("accuracy {:.4} on {} subjects", ev.report.values.accuracy, ev.predictions.len());
        }
        Command::Ablate {
            config,
            grid,
            out_csv,
            results_dir,
        } => {
            let cfg = load_config(config.as_deref())?;
            let grid = GridSpec::load(&grid)?;
            let rows = run_ablation(&cfg, &grid)?;
            write_text(&ablation_csv(&rows), &out_csv)?;
            if let Some(dir) = results_dir {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for r in &rows {
                    write_json(&r.result, &dir.join(format!("cell_{}.json", r.id)))?;
                }
            }
        }
        Command::Curve { results, out_csv } => {
            let results = read_results_dir(&results)?;
            if results.is_empty() {
                return Err(Error::Validation("no result files found".into()));
            }
            write_text(&emit_curve(&curve_points(&results)?), &out_csv)?;
        }
        Command::SynthCohort {
            out,
            spec,
            n_train,
            n_test,
            seed,
        } => {
            let mut s = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    serde_json::from_str(&text)?
                }
                None => CohortSpec::default(),
            };
            s.n_train = n_train.unwrap_or(s.n_train);
            s.n_test = n_test.unwrap_or(s.n_test);
            s.seed = seed.unwrap_or(s.seed);
            let files = write_synthetic_cohort(&s, &out)?;
            eprintln!("grid: {}", files.grid.display());
        }
    }
    Ok(Outcome::Done)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::BudgetExceeded) => {
            eprintln!("error: external-tool failure budget exceeded");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
