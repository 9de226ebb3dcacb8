//! CSV and JSON writers. Floats use the shortest round-trip representation,
//! so identical runs produce identical bytes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::experiment::{ErrorSeries, RunMetadata, StabilitySummary, TableRow};

pub const RUN_HEADER: &str = "k,t,l2_error,energy,kinetic_sum,dissipation_sum,stability_slack";
pub const TABLE_HEADER: &str = "level,h,eps_mode,max_l2_error,rate,scheme,status";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One line per time step; the stability columns are empty for implicit runs.
pub fn write_run_csv<W: Write>(series: &ErrorSeries, mut w: W) -> Result<()> {
    writeln!(w, "{RUN_HEADER}")?;
    let stab = series.stability.as_ref();
    for (k, ((t, e), en)) in series.times.iter().zip(&series.l2_errors).zip(&series.energies).enumerate() {
        let pick = |f: fn(&StabilitySummary) -> &Vec<f64>| stab.and_then(|s| f(s).get(k).copied());
        writeln!(
            w,
            "{k},{t},{e},{en},{},{},{}",
            opt(pick(|s| &s.kinetic)),
            opt(pick(|s| &s.dissipation)),
            opt(pick(|s| &s.slack)),
        )?;
    }
    Ok(())
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], mut w: W) -> Result<()> {
    writeln!(w, "{TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.level,
            r.h,
            r.eps_mode,
            opt(r.max_l2_error),
            opt(r.rate),
            r.scheme,
            r.status
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SeriesJson<'a> {
    times: &'a [f64],
    l2_errors: &'a [f64],
    energies: &'a [f64],
    max_error: f64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    stability: Option<&'a StabilitySummary>,
    metadata: &'a RunMetadata,
}

#[derive(Serialize)]
struct RunJson<'a> {
    config: &'a crate::config::ExperimentConfig,
    series: SeriesJson<'a>,
    report: ReportJson<'a>,
}

/// A single object with `config`, `series` and `report` keys.
pub fn write_run_json<W: Write>(series: &ErrorSeries, mut w: W) -> Result<()> {
    let doc = RunJson {
        config: &series.config,
        series: SeriesJson {
            times: &series.times,
            l2_errors: &series.l2_errors,
            energies: &series.energies,
            max_error: series.max_error,
        },
        report: ReportJson { stability: series.stability.as_ref(), metadata: &series.metadata },
    };
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    Ok(())
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomically<F: FnOnce(&mut Vec<u8>) -> Result<()>>(path: &Path, fill: F) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
