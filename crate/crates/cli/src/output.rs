//! Atomic file output and the CSV schemas written by each command.

use std::io::Write;
use std::path::Path;

use censored_meta::estimators::{Estimate, EstimateReport};
use censored_meta::sampler::{Chain, Dic, ParameterSummary};
use censored_meta::simulation::{MetricsReport, RawEstimate};

use crate::CliError;

pub const POSTERIOR_SUMMARY_HEADER: &str = "parameter,mean,sd,median,q025,q975,rhat,ess";
pub const FOREST_HEADER: &str = "level,n_studies,mean,q025,q975";
pub const ESTIMATES_HEADER: &str = "method,parameter,estimate,lo,hi,se,n_used,n_dropped,gap_vs_bmcd";
pub const METRICS_HEADER: &str = "scenario,parameter,truth,pct_missing,method,cp,mad,rmse,mean_pe,mean_se,var_pe,n_ok,n_excluded";
pub const RAW_ESTIMATES_HEADER: &str = "scenario,replicate,method,parameter,estimate,lo,hi,se,covered,error";
pub const RELATIVE_EFFICIENCY_HEADER: &str = "scenario,reference,method,parameter,rf";
pub const DIAGNOSTICS_HEADER: &str = "parameter,rhat,ess,flagged";

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Fatal(format!("cannot create {}: {e}", dir.display())))?;
    let io = |e: std::io::Error| CliError::Fatal(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf).map_err(io)?;
        buf.flush().map_err(io)?;
    }
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_lines(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })
}

/// CSV field; quotes values containing separators.
pub fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn summary_row(p: &ParameterSummary) -> String {
    format!("{},{},{},{},{},{},{},{}", field(&p.name), p.mean, p.sd, p.median, p.q025, p.q975, num(p.rhat), num(p.ess))
}

pub fn forest_row(level: &str, n_studies: usize, p: &ParameterSummary) -> String {
    format!("{},{},{},{},{}", field(level), n_studies, p.mean, p.q025, p.q975)
}

pub fn dic_text(dic: &Dic) -> String {
    format!(
        "DIC {}\npD {}\nmean_deviance {}\ndeviance_at_posterior_mean {}\n",
        dic.dic, dic.pd, dic.mean_deviance, dic.deviance_at_mean
    )
}

pub fn write_chain(path: &Path, chain: &Chain) -> Result<(), CliError> {
    write_atomic(path, |w| chain.write_csv(w))
}

fn estimate_cells(e: Option<&Estimate>) -> String {
    match e {
        Some(e) => format!("{},{},{},{}", e.estimate, e.lo, e.hi, e.se),
        None => ",,,".into(),
    }
}

/// Rows of estimates.csv for one method. `bmcd` supplies the incidence
/// gap column.
pub fn estimate_rows(report: &EstimateReport, bmcd: Option<&EstimateReport>) -> Vec<String> {
    let tail = format!("{},{}", report.n_used, report.n_dropped);
    let gap = |own: Option<&Estimate>, reference: Option<&Estimate>| match (own, reference) {
        (Some(a), Some(b)) => (a.estimate - b.estimate).to_string(),
        _ => String::new(),
    };
    let mut rows = vec![format!(
        "{},incidence.overall,{},{tail},{}",
        report.method,
        estimate_cells(report.overall.as_ref()),
        gap(report.overall.as_ref(), bmcd.and_then(|b| b.overall.as_ref()))
    )];
    for (i, level) in report.levels.iter().enumerate() {
        let own = report.incidences[i].as_ref();
        rows.push(format!(
            "{},{},{},{tail},{}",
            report.method,
            field(&format!("incidence[{level}]")),
            estimate_cells(own),
            gap(own, bmcd.and_then(|b| b.incidence(level)))
        ));
    }
    for or in &report.odds_ratios {
        let name = format!("or[{}/{}]", report.levels[or.a], report.levels[or.b]);
        rows.push(format!("{},{},{},{tail},", report.method, field(&name), estimate_cells(or.estimate.as_ref())));
    }
    rows
}

pub fn metrics_rows(report: &MetricsReport) -> Vec<String> {
    report
        .cells
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                field(&report.scenario),
                c.parameter,
                c.truth,
                c.pct_missing,
                c.method,
                num(c.cp),
                num(c.mad),
                num(c.rmse),
                num(c.mean_pe),
                num(c.mean_se),
                num(c.var_pe),
                c.n_ok,
                c.n_excluded
            )
        })
        .collect()
}

pub fn raw_rows(scenario: &str, raw: &[RawEstimate]) -> Vec<String> {
    raw.iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                field(scenario),
                r.replicate,
                r.method,
                r.parameter,
                estimate_cells(r.estimate.as_ref()),
                r.covered.map_or(String::new(), |c| c.to_string()),
                field(r.error.as_deref().unwrap_or(""))
            )
        })
        .collect()
}
