//! Method comparison over a pair manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use aquaclear::dataops::PairManifest;
use aquaclear::metrics::{csv_row, evaluate_pair, format_value, MetricsReport, SsimParams, CSV_HEADER};
use aquaclear::pipeline::{run_method, Method, MethodContext};
use aquaclear::ImageF;

use crate::CliError;

pub const PER_IMAGE_FILE: &str = "per_image.csv";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";
pub const SUMMARY_MD_FILE: &str = "summary.md";
pub const FAILURES_FILE: &str = "failures.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct ImageResult {
    pub method: Method,
    pub image: String,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub method: Method,
    pub image: String,
    pub error: String,
}

/// Per-method means over the images the method succeeded on.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub method: Method,
    pub images: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub colorfulness: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub results: Vec<ImageResult>,
    pub failures: Vec<Failure>,
    pub table: BenchmarkTable,
}

/// Median wall-clock seconds of `reps` runs; zero reps runs once untimed.
fn timed(reps: usize, mut f: impl FnMut() -> aquaclear::Result<ImageF>) -> aquaclear::Result<(ImageF, f64)> {
    if reps == 0 {
        return Ok((f()?, 0.0));
    }
    let mut times = Vec::with_capacity(reps);
    let mut out = None;
    for _ in 0..reps {
        let start = Instant::now();
        let img = f()?;
        times.push(start.elapsed().as_secs_f64());
        out = Some(img);
    }
    times.sort_by(f64::total_cmp);
    Ok((out.expect("reps > 0"), times[reps / 2]))
}

pub fn run_benchmark(
    manifest: &PairManifest,
    methods: &[Method],
    ctx: &MethodContext<'_, f64>,
    ssim: &SsimParams,
    timing_reps: usize,
) -> BenchmarkOutcome {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for i in 0..manifest.pairs.len() {
        let image = manifest.name(i);
        let (degraded, gt) = match manifest.load_pair::<f64>(i) {
            Ok(p) => p,
            Err(e) => {
                for &method in methods {
                    failures.push(Failure { method, image: image.clone(), error: e.to_string() });
                }
                continue;
            }
        };
        for &method in methods {
            let outcome = timed(timing_reps, || run_method(method, &degraded, ctx)).and_then(|(out, secs)| {
                let mut report = evaluate_pair(&gt, &out, ssim)?;
                report.elapsed_seconds = secs;
                Ok(report)
            });
            match outcome {
                Ok(report) => results.push(ImageResult { method, image: image.clone(), report }),
                Err(e) => failures.push(Failure { method, image: image.clone(), error: e.to_string() }),
            }
        }
    }
    let table = BenchmarkTable::from_results(methods, &results);
    BenchmarkOutcome { results, failures, table }
}

impl BenchmarkTable {
    pub fn from_results(methods: &[Method], results: &[ImageResult]) -> Self {
        let rows = methods
            .iter()
            .map(|&method| {
                let rs: Vec<&MetricsReport> = results.iter().filter(|r| r.method == method).map(|r| &r.report).collect();
                let n = rs.len();
                let mean = |f: fn(&MetricsReport) -> f64| {
                    if n == 0 {
                        f64::NAN
                    } else {
                        rs.iter().map(|r| f(r)).sum::<f64>() / n as f64
                    }
                };
                BenchmarkRow {
                    method,
                    images: n,
                    psnr_db: mean(|r| r.psnr_db),
                    ssim: mean(|r| r.ssim),
                    colorfulness: mean(|r| r.colorfulness),
                    seconds: mean(|r| r.elapsed_seconds),
                }
            })
            .collect();
        Self { rows }
    }

    pub fn row(&self, method: Method) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,images,psnr_db,ssim,colorfulness,seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method,
                r.images,
                format_value(r.psnr_db),
                format_value(r.ssim),
                format_value(r.colorfulness),
                format_value(r.seconds)
            );
        }
        s
    }

    /// Markdown table with padded, aligned columns.
    pub fn to_markdown(&self) -> String {
        let header = ["Method", "Images", "PSNR (dB)", "SSIM", "CM", "Seconds"];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.to_string(),
                    r.images.to_string(),
                    format_value(r.psnr_db),
                    format_value(r.ssim),
                    format_value(r.colorfulness),
                    format_value(r.seconds),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..6)
            .map(|c| cells.iter().map(|row| row[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        let line = |s: &mut String, vals: &[&str]| {
            s.push('|');
            for (c, v) in vals.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, " {v:<w$} |", w = widths[c]);
                } else {
                    let _ = write!(s, " {v:>w$} |", w = widths[c]);
                }
            }
            s.push('\n');
        };
        line(&mut s, &header);
        s.push('|');
        for (c, w) in widths.iter().enumerate() {
            if c == 0 {
                let _ = write!(s, ":{}|", "-".repeat(w + 1));
            } else {
                let _ = write!(s, "{}:|", "-".repeat(w + 1));
            }
        }
        s.push('\n');
        for row in &cells {
            line(&mut s, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        s
    }
}

pub fn per_image_csv(results: &[ImageResult]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in results {
        s.push_str(&csv_row(r.method.name(), &r.image, &r.report));
        s.push('\n');
    }
    s
}

pub fn failures_csv(failures: &[Failure]) -> String {
    let mut s = String::from("method,image,error\n");
    for f in failures {
        let _ = writeln!(s, "{},{},\"{}\"", f.method, f.image, f.error.replace('"', "'"));
    }
    s
}

pub fn write_outputs(out_dir: &Path, outcome: &BenchmarkOutcome) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(format!("{}: {e}", out_dir.display())))?;
    let files = [
        (PER_IMAGE_FILE, per_image_csv(&outcome.results)),
        (SUMMARY_CSV_FILE, outcome.table.to_csv()),
        (SUMMARY_MD_FILE, outcome.table.to_markdown()),
        (FAILURES_FILE, failures_csv(&outcome.failures)),
    ];
    for (name, text) in files {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(p: f64, s: f64) -> MetricsReport {
        MetricsReport { psnr_db: p, ssim: s, colorfulness: 10.0, elapsed_seconds: 0.0 }
    }

    #[test]
    fn means_and_formats() {
        let results = vec![
            ImageResult { method: Method::Input, image: "a".into(), report: report(20.0, 0.5) },
            ImageResult { method: Method::Input, image: "b".into(), report: report(30.0, 0.7) },
            ImageResult { method: Method::Msr, image: "a".into(), report: report(f64::INFINITY, 1.0) },
        ];
        let t = BenchmarkTable::from_results(&[Method::Input, Method::Msr], &results);
        assert_eq!(t.row(Method::Input).unwrap().psnr_db, 25.0);
        assert!((t.row(Method::Input).unwrap().ssim - 0.6).abs() < 1e-15);
        assert_eq!(t.row(Method::Msr).unwrap().images, 1);
        let csv = t.to_csv();
        assert_eq!(csv.lines().nth(2).unwrap(), "msr,1,inf,1.000000,10.000000,0.000000");
        let md = t.to_markdown();
        let widths: Vec<usize> = md.lines().map(str::len).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{md}");
        assert!(md.starts_with("| Method"));
        assert_eq!(per_image_csv(&results).lines().count(), 4);
    }
}
