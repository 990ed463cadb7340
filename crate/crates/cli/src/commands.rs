//! The four subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use censored_meta::estimators::{bmcd_report, run_comparator, EstimateReport, GroupedCounts, Method};
use censored_meta::sampler::{self, compute_dic, effective_sample_size, split_rhat, FitOutput, RHAT_THRESHOLD};
use censored_meta::simulation::{relative_efficiency, run_scenario, MetricsReport};
use censored_meta::{CensoredBinomialModel, Execution, ModelSpec, StudyRecord};
use log::{info, warn};

use crate::config::{CommandKind, RunConfig};
use crate::ingest::{ingest_path, IngestReport};
use crate::output::*;
use crate::CliError;

pub const STUDY_FACTOR: &str = "study";

fn core(e: censored_meta::Error) -> CliError {
    CliError::Fatal(e.to_string())
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Fatal(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    let manifest = serde_json::to_string_pretty(cfg).expect("config serializes");
    write_atomic(&cfg.output_dir.join("run_manifest.json"), |w| writeln!(w, "{manifest}"))?;
    match cfg.command {
        CommandKind::Fit => fit_command(cfg),
        CommandKind::Compare => compare_command(cfg),
        CommandKind::Simulate => simulate_command(cfg),
        CommandKind::Diagnose => diagnose_command(cfg),
    }
}

fn input(cfg: &RunConfig) -> &Path {
    cfg.input.as_deref().expect("input checked when resolving the config")
}

fn load(cfg: &RunConfig) -> Result<(Vec<StudyRecord>, IngestReport), CliError> {
    let (records, report) = ingest_path(input(cfg))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(&cfg.output_dir.join("ingest_report.json"), |w| writeln!(w, "{json}"))?;
    info!("read {} rows, rejected {}", report.rows_read, report.rows_rejected);
    Ok((records, report))
}

/// Builds the hierarchical model. A `study` factor without its own column
/// uses `study_id`.
pub fn build_model(mut records: Vec<StudyRecord>, cfg: &RunConfig) -> Result<CensoredBinomialModel, CliError> {
    for r in &mut records {
        if cfg.factors.iter().any(|f| f == STUDY_FACTOR) && r.level(STUDY_FACTOR).is_none() {
            let id = r.study_id.clone();
            r.factor_levels.insert(STUDY_FACTOR.into(), id);
        }
        if let Some(f) = cfg.factors.iter().find(|f| r.level(f).is_none()) {
            return Err(CliError::Fatal(format!("study `{}` has no value for factor column `{f}`", r.study_id)));
        }
    }
    let spec = ModelSpec {
        scale_prior_scale: cfg.scale_a,
        hyper_mean_sd: cfg.hyper_mean_sd,
        fix_hyper_means: cfg.fix_hyper_means,
        ..ModelSpec::hierarchical(cfg.factors.clone())
    };
    CensoredBinomialModel::new(records, spec).map_err(core)
}

fn fit_model(model: &CensoredBinomialModel, cfg: &RunConfig) -> Result<FitOutput, CliError> {
    if model.likelihood_is_constant() {
        let msg = "every study is censored at or above its size, so the data carry no information: the posterior equals the prior";
        warn!("{msg}");
        write_atomic(&cfg.output_dir.join("warnings.txt"), |w| writeln!(w, "{msg}"))?;
    }
    info!(
        "sampling {} chains x ({} burn-in + {} x {}) sweeps over {} parameters",
        cfg.sampler.n_chains,
        cfg.sampler.burn_in,
        cfg.sampler.kept_per_chain,
        cfg.sampler.thin,
        model.dim()
    );
    let fit = sampler::run(model, &cfg.sampler).map_err(core)?;
    if !fit.summary.flagged.is_empty() {
        let path = cfg.output_dir.join("convergence_warning.txt");
        let flagged: Vec<String> = fit
            .summary
            .flagged
            .iter()
            .map(|n| format!("{n} rhat={}", fit.summary.get(n).map_or(f64::NAN, |p| p.rhat)))
            .collect();
        write_atomic(&path, |w| {
            writeln!(w, "R-hat above {RHAT_THRESHOLD} for {} quantities:", flagged.len())?;
            flagged.iter().try_for_each(|l| writeln!(w, "{l}"))
        })?;
        warn!("convergence warning written to {}", path.display());
    }
    Ok(fit)
}

pub fn fit_command(cfg: &RunConfig) -> Result<(), CliError> {
    let (records, _) = load(cfg)?;
    let model = build_model(records, cfg)?;
    let fit = fit_model(&model, cfg)?;
    let out = &cfg.output_dir;

    let rows: Vec<String> = fit.summary.parameters.iter().map(summary_row).collect();
    write_lines(&out.join("posterior_summary.csv"), POSTERIOR_SUMMARY_HEADER, &rows)?;
    for (i, chain) in fit.chains.iter().enumerate() {
        write_chain(&out.join("chains").join(format!("{}.csv", i + 1)), chain)?;
    }
    let dic = compute_dic(&fit.chains, &model);
    write_atomic(&out.join("dic.txt"), |w| w.write_all(dic_text(&dic).as_bytes()))?;

    let b = model.block_index(&cfg.group_by).expect("group-by is one of the model factors");
    let block = &model.blocks()[b];
    let mut forest = Vec::new();
    for (l, level) in block.levels.iter().enumerate() {
        let name = format!("theta.{}[{level}]", cfg.group_by);
        let p = fit.summary.get(&name).expect("derived incidence for every level");
        forest.push(forest_row(level, block.members[l].len(), p));
    }
    let overall = fit.summary.get("incidence.overall").expect("overall incidence");
    forest.push(forest_row("overall", model.records().len(), overall));
    write_lines(&out.join("forest.csv"), FOREST_HEADER, &forest)?;
    info!("DIC {:.2} (pD {:.2}); max R-hat {:.4}", dic.dic, dic.pd, fit.summary.max_rhat());
    Ok(())
}

pub fn compare_command(cfg: &RunConfig) -> Result<(), CliError> {
    let (records, _) = load(cfg)?;
    let mut reports: Vec<EstimateReport> = Vec::new();
    let mut bmcd = None;
    if cfg.methods.contains(&Method::Bmcd) {
        let model = build_model(records.clone(), cfg)?;
        let fit = fit_model(&model, cfg)?;
        bmcd = Some(bmcd_report(&model, &fit, &cfg.group_by).map_err(core)?);
    }
    let grouped = if cfg.methods.iter().any(|m| *m != Method::Bmcd) {
        let mut with_study = records.clone();
        if cfg.group_by == STUDY_FACTOR {
            for r in &mut with_study {
                if r.level(STUDY_FACTOR).is_none() {
                    let id = r.study_id.clone();
                    r.factor_levels.insert(STUDY_FACTOR.into(), id);
                }
            }
        }
        Some(GroupedCounts::from_records(&with_study, &cfg.group_by).map_err(core)?)
    } else {
        None
    };
    for &m in &cfg.methods {
        match m {
            Method::Bmcd => reports.push(bmcd.clone().expect("fitted above")),
            m => reports.push(run_comparator(m, grouped.as_ref().expect("grouped above")).map_err(core)?),
        }
    }
    let mut rows = Vec::new();
    for r in &reports {
        let reference = if r.method == Method::Bmcd { None } else { bmcd.as_ref() };
        rows.extend(estimate_rows(r, reference));
        if let (Some(own), Some(b)) = (r.overall, bmcd.as_ref().and_then(|b| b.overall)) {
            if r.method != Method::Bmcd {
                info!("{}: overall incidence {:.5} vs BMCD {:.5} ({:+.1}%)", r.method, own.estimate, b.estimate, 100.0 * (own.estimate / b.estimate - 1.0));
            }
        }
    }
    write_lines(&cfg.output_dir.join("estimates.csv"), ESTIMATES_HEADER, &rows)
}

pub fn simulate_command(cfg: &RunConfig) -> Result<(), CliError> {
    let mut reports: Vec<MetricsReport> = Vec::new();
    for choice in &cfg.scenarios {
        let scenario = cfg.scenario_config(choice)?;
        info!("scenario {}: {} replicates ({} for BMCD)", scenario.name, scenario.n_replicates, scenario.bmcd_replicates.min(scenario.n_replicates));
        let out = run_scenario(&scenario, &cfg.methods, Execution::default()).map_err(core)?;
        write_lines(&cfg.output_dir.join(format!("metrics_{}.csv", scenario.name)), METRICS_HEADER, &metrics_rows(&out.metrics))?;
        write_lines(
            &cfg.output_dir.join(format!("estimates_{}.csv", scenario.name)),
            RAW_ESTIMATES_HEADER,
            &raw_rows(&scenario.name, &out.raw),
        )?;
        reports.push(out.metrics);
    }
    let mut rows = Vec::new();
    if let Some(reference) = reports.iter().find(|r| r.scenario == "S1") {
        for other in reports.iter().filter(|r| r.scenario != "S1") {
            for cell in &other.cells {
                if let Ok(rf) = relative_efficiency(other, reference, cell.method, &cell.parameter) {
                    rows.push(format!("{},{},{},{},{rf}", other.scenario, reference.scenario, cell.method, cell.parameter));
                }
            }
        }
    }
    write_lines(&cfg.output_dir.join("relative_efficiency.csv"), RELATIVE_EFFICIENCY_HEADER, &rows)
}

/// Column names and, per chain, one vector per column.
pub type ChainColumns = (Vec<String>, Vec<Vec<Vec<f64>>>);

/// Chain CSVs from a fit directory (or its `chains/` subdirectory),
/// ordered by chain number.
pub fn read_chain_files(dir: &Path) -> Result<ChainColumns, CliError> {
    let chains_dir = if dir.join("chains").is_dir() { dir.join("chains") } else { dir.to_path_buf() };
    let entries = std::fs::read_dir(&chains_dir)
        .map_err(|e| CliError::Fatal(format!("cannot read {}: {e}", chains_dir.display())))?;
    let mut files: BTreeMap<(u64, String), PathBuf> = BTreeMap::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
            files.insert((stem.parse().unwrap_or(u64::MAX), stem), path);
        }
    }
    if files.is_empty() {
        return Err(CliError::Fatal(format!("no chain CSV files in {}", chains_dir.display())));
    }
    let mut names: Option<Vec<String>> = None;
    let mut chains = Vec::new();
    for path in files.values() {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Fatal(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = rdr.headers().map_err(|e| CliError::Fatal(e.to_string()))?.iter().map(String::from).collect();
        match &names {
            Some(n) if *n != header => return Err(CliError::Fatal(format!("{} has different columns", path.display()))),
            None => names = Some(header.clone()),
            _ => {}
        }
        let mut columns = vec![Vec::new(); header.len()];
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| CliError::Fatal(format!("{}: {e}", path.display())))?;
            for (c, v) in row.iter().enumerate() {
                let v: f64 = v
                    .parse()
                    .map_err(|_| CliError::Fatal(format!("{}: row {}: `{v}` is not a number", path.display(), i + 2)))?;
                columns[c].push(v);
            }
        }
        chains.push(columns);
    }
    Ok((names.unwrap_or_default(), chains))
}

pub fn diagnose_command(cfg: &RunConfig) -> Result<(), CliError> {
    let (names, chains) = read_chain_files(input(cfg))?;
    let mut rows = Vec::new();
    let mut flagged = 0;
    for (c, name) in names.iter().enumerate() {
        let per_chain: Vec<Vec<f64>> = chains.iter().map(|ch| ch[c].clone()).collect();
        let rhat = split_rhat(&per_chain);
        let is_flagged = rhat > RHAT_THRESHOLD;
        flagged += is_flagged as usize;
        rows.push(format!("{},{},{},{}", field(name), rhat, effective_sample_size(&per_chain), is_flagged));
    }
    if flagged > 0 {
        warn!("{flagged} parameters have R-hat above {RHAT_THRESHOLD}");
    }
    write_lines(&cfg.output_dir.join("diagnostics.csv"), DIAGNOSTICS_HEADER, &rows)
}
