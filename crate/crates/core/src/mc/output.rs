//! CSV emission for replication results.

use std::io::{self, Write};

use super::stats::{qq_points, SampleSummary};
use super::{CellSummary, ErrorSampleMatrix};

/// `t{t}_x{x}`, used to name per-cell files.
pub fn cell_file_stem(t: usize, x: f64) -> String {
    format!("t{t}_x{x}")
}

pub fn write_errors_csv<W: Write>(errors: &ErrorSampleMatrix, mut out: W) -> io::Result<()> {
    writeln!(out, "replication,t,x,scaled_error")?;
    for r in 0..errors.replications {
        for (&(t, x), v) in errors.cells.iter().zip(errors.row(r)) {
            writeln!(out, "{r},{t},{x},{v}")?;
        }
    }
    Ok(())
}

/// Undefined diagnostics are written as `NaN`.
pub fn write_summary_csv<W: Write>(cells: &[CellSummary], mut out: W) -> io::Result<()> {
    writeln!(out, "t,x,mean,variance,var_ci_halfwidth,ks_stat,qq_corr")?;
    for c in cells {
        let s = &c.stats;
        let (ks, qq) = s
            .normal_fit
            .map_or((f64::NAN, f64::NAN), |f| (f.ks_stat, f.qq_corr));
        writeln!(
            out,
            "{},{},{},{},{},{ks},{qq}",
            c.stage, c.state, s.mean, s.variance, s.var_ci_halfwidth
        )?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(summary: &SampleSummary, mut out: W) -> io::Result<()> {
    writeln!(out, "bin_lo,bin_hi,count")?;
    let h = &summary.histogram;
    for (k, count) in h.counts.iter().enumerate() {
        writeln!(out, "{},{},{count}", h.edges[k], h.edges[k + 1])?;
    }
    Ok(())
}

/// QQ pairs against the fitted normal; empty body for a constant sample.
pub fn write_qq_csv<W: Write>(
    values: &[f64],
    summary: &SampleSummary,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "theoretical,empirical")?;
    if summary.normal_fit.is_none() {
        return Ok(());
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    for (q, e) in qq_points(&sorted, summary.mean, summary.variance.sqrt()) {
        writeln!(out, "{q},{e}")?;
    }
    Ok(())
}
