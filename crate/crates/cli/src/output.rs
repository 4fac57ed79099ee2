//! CSV and JSON writers for benchmark reports.
//!
//! Both formats are plain functions of the report contents: float fields use
//! the shortest round-trip decimal form, so identical runs serialize to
//! identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rotbench_core::bench::BenchmarkReport;

pub const CSV_HEADER: &str =
    "replicate,representation,iteration,error_or_cost,wall_time_s,converged";

/// Renders one report as CSV with exactly `replicates * max_iters` data
/// rows, the iteration column running from 1 to `max_iters` within each
/// replicate. Replicates that terminated early repeat their final value on
/// the remaining rows; the `converged` column turns true on the first row at
/// or past a successful termination, so padded rows of converged runs are
/// recognizable as carried-forward values.
pub fn csv_for_report(report: &BenchmarkReport) -> String {
    let mut out = String::with_capacity(64 * report.replicates * report.max_iters);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (rep, trace) in report.traces.iter().enumerate() {
        let last_iter = trace.records.last().map_or(0, |r| r.iteration);
        let wall = report.replicate_wall_times_s[rep];
        for k in 1..=report.max_iters {
            let value = trace.value_at_or_last(k).expect("every trace has records");
            let converged = trace.converged && k >= last_iter;
            writeln!(
                out,
                "{rep},{},{k},{value},{wall},{converged}",
                report.representation
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

pub fn csv_file_name(report: &BenchmarkReport) -> String {
    format!("{}_{}.csv", report.scenario, report.representation)
}

pub fn summary_file_name(scenario: &str) -> String {
    format!("{scenario}_summary.json")
}

/// Writes one CSV per report plus a single JSON summary of all reports into
/// `dir` (created if missing) and returns the paths written.
pub fn write_outputs(dir: &Path, reports: &[BenchmarkReport]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for report in reports {
        let path = dir.join(csv_file_name(report));
        fs::write(&path, csv_for_report(report))?;
        written.push(path);
    }
    if let Some(first) = reports.first() {
        let mut json =
            serde_json::to_string_pretty(reports).expect("reports serialize to JSON");
        json.push('\n');
        let path = dir.join(summary_file_name(&first.scenario));
        fs::write(&path, json)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rotbench_core::bench::{run_wahba, WahbaScenario};
    use rotbench_core::wahba::Parameterization;

    fn small_report() -> BenchmarkReport {
        let scn =
            WahbaScenario { replicates: 3, n_points: 10, max_iters: 15, ..Default::default() };
        run_wahba(&scn, Parameterization::So3Manifold, false).unwrap()
    }

    #[test]
    fn csv_has_header_and_exact_row_count() {
        let report = small_report();
        let csv = csv_for_report(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.count(), 3 * 15);
    }

    #[test]
    fn csv_pads_with_final_value_and_flags_convergence() {
        let report = small_report();
        assert_eq!(report.converged, 3, "noiseless instances converge quickly");
        let csv = csv_for_report(&report);
        let last_row = csv.lines().last().unwrap();
        let fields: Vec<&str> = last_row.split(',').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], "2");
        assert_eq!(fields[1], "so3");
        assert_eq!(fields[2], "15");
        let value: f64 = fields[3].parse().unwrap();
        assert_eq!(value, *report.final_values.last().unwrap());
        assert_eq!(fields[4], "0");
        assert_eq!(fields[5], "true");
    }

    #[test]
    fn writes_csv_per_report_and_one_summary() {
        let dir = tempfile::tempdir().unwrap();
        let reports = vec![small_report()];
        let paths = write_outputs(dir.path(), &reports).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(dir.path().join("wahba_so3.csv").is_file());
        let json = std::fs::read_to_string(dir.path().join("wahba_summary.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let entry = &parsed.as_array().unwrap()[0];
        assert_eq!(entry["representation"], "so3");
        assert_eq!(entry["percentiles"]["median"].as_array().unwrap().len(), 16);
        assert!(entry.get("traces").is_none(), "raw traces stay out of the summary");
        let p25 = entry["percentiles"]["p25"].as_array().unwrap();
        let p75 = entry["percentiles"]["p75"].as_array().unwrap();
        let med = entry["percentiles"]["median"].as_array().unwrap();
        for k in 0..p25.len() {
            assert!(p25[k].as_f64().unwrap() <= med[k].as_f64().unwrap());
            assert!(med[k].as_f64().unwrap() <= p75[k].as_f64().unwrap());
        }
    }
}
