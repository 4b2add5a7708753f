//! Command-line front end: perimetry, study simulation, trial-log
//! analysis, group comparison and report rendering.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tunnelsim_core::analysis::{
    analyze_trials, read_metrics_csv_path, render_exclusion_summary, write_metrics_csv_path,
    AnalysisParams, MetricsRow,
};
use tunnelsim_core::cohort;
use tunnelsim_core::error::Error;
use tunnelsim_core::log::read_trials_path;
use tunnelsim_core::mask::{FieldBoundary, MaskRaster};
use tunnelsim_core::metrics::ExclusionSummary;
use tunnelsim_core::model::TaskKind;
use tunnelsim_core::perimetry::{
    read_profile, run_perimetry, write_profile, PerimetryConfig, ResponderModel,
};
use tunnelsim_core::report::{read_report, render_report, write_report};
use tunnelsim_core::stats::compare::{compare_tables, parameter_names};
use tunnelsim_core::stats::{TostConfig, TostMode};
use tunnelsim_core::study::{read_manifest, simulate_study, StudyConfig};

#[derive(Parser)]
#[command(
    name = "tunnelsim",
    version,
    about = "Gaze-contingent tunnel-vision study simulator and analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure a visual field from a ground-truth profile with kinetic
    /// perimetry.
    Perimetry {
        /// Ground-truth VF profile (JSON, 24 (angle, extent) pairs per eye).
        #[arg(long)]
        truth: PathBuf,
        /// Responder reaction delay, seconds.
        #[arg(long, default_value_t = 0.0)]
        delay: f64,
        /// Responder fixation noise sigma, degrees.
        #[arg(long, default_value_t = 0.0)]
        fixation_noise: f64,
        /// Output path for the measured profile.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON file overriding the perimetry parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optional PGM export of the measured field's alpha mask.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Simulate a full multi-session study into a directory.
    Simulate {
        /// Study configuration (JSON). Without it, the bundled
        /// 16-participant cohort is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of sessions.
        #[arg(long)]
        sessions: Option<u32>,
        /// Override the session length in minutes.
        #[arg(long)]
        session_minutes: Option<f64>,
    },
    /// Compute per-trial gaze metrics from trial logs.
    Analyze {
        /// A trial log (JSONL), or a study output directory containing
        /// manifest.json (all participants are analyzed).
        #[arg(long = "in")]
        input: PathBuf,
        /// Measured VF profile; required when --in is a single log.
        #[arg(long)]
        vf: Option<PathBuf>,
        /// Participant label for single-log mode (defaults to the file
        /// stem).
        #[arg(long)]
        participant: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON file overriding detector/DVF parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict directory mode to one group label.
        #[arg(long)]
        group: Option<String>,
    },
    /// Run the detrending + TOST + group-difference pipeline on two
    /// metrics tables.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Comma-separated parameter list (default: all).
        #[arg(long, value_delimiter = ',')]
        params: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        delta_factor: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// TOST input: trial residuals or per-participant means.
        #[arg(long, default_value = "trial_residuals")]
        tost_mode: String,
        /// Group labels for the report.
        #[arg(long, default_value = "A")]
        label_a: String,
        #[arg(long, default_value = "B")]
        label_b: String,
        /// Optional JSON file overriding the TOST configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render a comparison report as a human-readable table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run() -> Result<(), Error> {
    match Cli::parse().command {
        Command::Perimetry {
            truth,
            delay,
            fixation_noise,
            out,
            seed,
            config,
            mask_out,
        } => {
            let truth = read_profile(&truth)?;
            let cfg: PerimetryConfig = match config {
                Some(p) => load_json_config(&p)?,
                None => PerimetryConfig::default(),
            };
            let model = ResponderModel {
                reaction_delay: delay,
                fixation_noise,
                seed,
            };
            let result = run_perimetry(&truth, &model, &cfg)?;
            let profile = result.to_profile(0.5)?;
            write_profile(&out, &profile)?;
            println!(
                "measured {} meridians per eye ({} aborted sweeps) -> {}",
                profile.left.len(),
                result.aborted_sweeps,
                out.display()
            );
            if let Some(mask_path) = mask_out {
                let mask = MaskRaster::build(
                    FieldBoundary::from_profile(&profile),
                    tunnelsim_core::mask::DEFAULT_BLUR_DEG,
                    tunnelsim_core::mask::DEFAULT_RESOLUTION_DEG,
                )?;
                let file = std::fs::File::create(&mask_path)?;
                mask.write_pgm(std::io::BufWriter::new(file))?;
                println!("mask raster -> {}", mask_path.display());
            }
        }
        Command::Simulate {
            config,
            out,
            seed,
            sessions,
            session_minutes,
        } => {
            let mut cfg: StudyConfig = match config {
                Some(p) => StudyConfig::read(&p)?,
                None => cohort::default_study(seed.unwrap_or(0))?,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = sessions {
                cfg.sessions = s;
            }
            if let Some(m) = session_minutes {
                cfg.session_minutes = m;
            }
            cfg.validate()?;
            let manifest = simulate_study(&cfg, &out)?;
            let total: usize = manifest
                .groups
                .iter()
                .flat_map(|g| g.participants.iter().map(|p| p.trial_count))
                .sum();
            println!(
                "simulated {} participants, {} trials -> {}",
                manifest.groups.iter().map(|g| g.participants.len()).sum::<usize>(),
                total,
                out.display()
            );
        }
        Command::Analyze {
            input,
            vf,
            participant,
            out,
            config,
            group,
        } => {
            let params: AnalysisParams = match config {
                Some(p) => load_json_config(&p)?,
                None => AnalysisParams::default(),
            };
            let mut rows: Vec<MetricsRow> = Vec::new();
            let mut summaries: std::collections::BTreeMap<TaskKind, ExclusionSummary> =
                Default::default();
            if input.is_dir() {
                let manifest = read_manifest(&input.join("manifest.json"))?;
                for g in &manifest.groups {
                    if let Some(want) = &group {
                        if &g.label != want {
                            continue;
                        }
                    }
                    for p in &g.participants {
                        let records = read_trials_path(&p.trials)?;
                        let profile = read_profile(&p.vf)?;
                        let boundary = FieldBoundary::from_profile(&profile);
                        let (r, s) = analyze_trials(records, &boundary, &params, &p.id);
                        rows.extend(r);
                        for (task, summary) in s {
                            let e = summaries.entry(task).or_default();
                            e.total += summary.total;
                            e.missing += summary.missing;
                            e.excluded += summary.excluded;
                            e.analyzed += summary.analyzed;
                        }
                    }
                }
            } else {
                let vf = vf.ok_or_else(|| {
                    Error::Config("--vf is required when --in is a single log".into())
                })?;
                let label = participant.unwrap_or_else(|| {
                    input
                        .file_stem()
                        .map(|s| s.to_string_lossy().trim_end_matches(".trials").to_string())
                        .unwrap_or_else(|| "participant".into())
                });
                let records = read_trials_path(&input)?;
                let profile = read_profile(&vf)?;
                let boundary = FieldBoundary::from_profile(&profile);
                let (r, s) = analyze_trials(records, &boundary, &params, &label);
                rows = r;
                summaries = s;
            }
            write_metrics_csv_path(&out, &rows)?;
            print!("{}", render_exclusion_summary(&summaries));
            println!("{} rows -> {}", rows.len(), out.display());
        }
        Command::Compare {
            a,
            b,
            params,
            out,
            delta_factor,
            alpha,
            tost_mode,
            label_a,
            label_b,
            config,
        } => {
            let mut cfg: TostConfig = match config {
                Some(p) => load_json_config(&p)?,
                None => TostConfig {
                    delta_factor,
                    alpha,
                    mode: TostMode::TrialResiduals,
                },
            };
            cfg.mode = match tost_mode.as_str() {
                "trial_residuals" => TostMode::TrialResiduals,
                "participant_means" => TostMode::ParticipantMeans,
                other => {
                    return Err(Error::Config(format!(
                        "unknown tost mode {other:?} (trial_residuals | participant_means)"
                    )))
                }
            };
            let rows_a = read_metrics_csv_path(&a)?;
            let rows_b = read_metrics_csv_path(&b)?;
            let report = compare_tables(&rows_a, &rows_b, &label_a, &label_b, &params, &cfg)?;
            write_report(&out, &report)?;
            println!(
                "compared {} parameter/task conditions ({} skipped) -> {}",
                report.parameters.len(),
                report.skipped.len(),
                out.display()
            );
            if params.is_empty() {
                println!("parameters: {}", parameter_names().join(", "));
            }
        }
        Command::Report { input, out } => {
            let report = read_report(&input)?;
            let text = render_report(&report)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &text)?;
                    println!("report table -> {}", path.display());
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
