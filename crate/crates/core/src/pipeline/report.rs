use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::distance::DistanceReport;
use super::metrics::{convergence_speedup, median, relative_improvement};
use super::runs::{RunMode, RunResult};
use crate::error::{Error, Result};

/// Oracle rows count as a gap when they beat OT selection by more than this.
pub const GAP_MARGIN: f64 = 0.05;
pub const DEFAULT_SPEEDUP_THRESHOLD: f64 = 0.7;

/// One line of `comparison.csv`: a (target, mode) pair aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub target: String,
    /// `scratch`, `ot_transfer`, `loo_transfer`, `oracle` or `worst`.
    pub mode: String,
    pub source: String,
    /// Median accuracy over seeds.
    pub acc: f64,
    pub ri_vs_scratch: Option<f64>,
    /// Median paired speedup over scratch.
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Targets whose oracle accuracy exceeds OT accuracy by more than [`GAP_MARGIN`].
    pub gap_count: usize,
    /// Targets that have both an oracle and an OT row.
    pub gap_targets: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:.4}"),
        None => String::new(),
    }
}

impl ComparisonReport {
    pub fn row(&self, target: &str, mode: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.target == target && r.mode == mode)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,mode,source,acc,ri_vs_scratch,speedup\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.target,
                r.mode,
                r.source,
                r.acc,
                fmt_opt(r.ri_vs_scratch),
                fmt_opt(r.speedup)
            );
        }
        out
    }

    pub fn gap_text(&self) -> String {
        format!("oracle_gap_count,targets\n{},{}\n", self.gap_count, self.gap_targets)
    }
}

fn most_common(names: &[String]) -> String {
    let mut sorted = names.to_vec();
    sorted.sort();
    let mut best = (0, String::new());
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|n| **n == sorted[i]).count();
        if j > best.0 {
            best = (j, sorted[i].clone());
        }
        i += j;
    }
    best.1
}

fn source_label(runs: &[&RunResult]) -> String {
    let names: Vec<String> = runs.iter().filter_map(|r| r.source.clone()).collect();
    most_common(&names)
}

/// Aggregate runs into per-target rows. Grid runs become an `oracle` row
/// (median over seeds of the best arm) and a `worst` row.
pub fn build_comparison(runs: &[RunResult], speedup_threshold: f64) -> Result<ComparisonReport> {
    let mut targets: Vec<&str> = Vec::new();
    for r in runs {
        if !targets.contains(&r.target.as_str()) {
            targets.push(&r.target);
        }
    }
    let mut report = ComparisonReport::default();
    for target in targets {
        let of = |pred: &dyn Fn(&RunMode) -> bool| -> Vec<&RunResult> {
            runs.iter().filter(|r| r.target == target && pred(&r.mode)).collect()
        };
        let scratch = of(&|m| *m == RunMode::Scratch);
        let scratch_acc = median(&scratch.iter().map(|r| r.final_accuracy).collect::<Vec<_>>());
        let ri = |acc: f64| scratch_acc.map(|s| relative_improvement(acc, s)).transpose();
        let speedup = |mode_runs: &[&RunResult]| -> Result<Option<f64>> {
            let mut values = Vec::new();
            for r in mode_runs {
                if let Some(s) = scratch.iter().find(|s| s.seed == r.seed) {
                    match convergence_speedup(&r.curve, &s.curve, speedup_threshold) {
                        Ok(v) => values.push(v),
                        Err(Error::NotComparable(_)) | Err(Error::Precondition(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(median(&values))
        };

        let mut push = |mode: &str, source: String, group: &[&RunResult], accs: Vec<f64>, with_speedup: bool| -> Result<()> {
            let acc = median(&accs).expect("non-empty group");
            report.rows.push(ComparisonRow {
                target: target.to_string(),
                mode: mode.to_string(),
                source,
                acc,
                ri_vs_scratch: ri(acc)?,
                speedup: if with_speedup { speedup(group)? } else { None },
            });
            Ok(())
        };

        if !scratch.is_empty() {
            let accs = scratch.iter().map(|r| r.final_accuracy).collect();
            push("scratch", String::new(), &scratch, accs, true)?;
        }
        for (mode, label) in [(RunMode::OtTransfer, "ot_transfer"), (RunMode::LooTransfer, "loo_transfer")] {
            let group = of(&|m| *m == mode);
            if !group.is_empty() {
                let accs = group.iter().map(|r| r.final_accuracy).collect();
                push(label, source_label(&group), &group, accs, true)?;
            }
        }
        let grid = of(&|m| matches!(m, RunMode::GridSource(_)));
        if !grid.is_empty() {
            let mut seeds: Vec<u64> = grid.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let mut best = Vec::new();
            let mut worst = Vec::new();
            for s in seeds {
                let arms: Vec<RunResult> = grid.iter().filter(|r| r.seed == s).map(|r| (*r).clone()).collect();
                let (b, w) = super::runs::best_and_worst(&arms).expect("non-empty");
                best.push(arms.iter().find(|r| r.source.as_deref() == Some(&b)).cloned().expect("present"));
                worst.push(arms.iter().find(|r| r.source.as_deref() == Some(&w)).cloned().expect("present"));
            }
            for (label, picks) in [("oracle", best), ("worst", worst)] {
                let refs: Vec<&RunResult> = picks.iter().collect();
                let accs = picks.iter().map(|r| r.final_accuracy).collect();
                push(label, source_label(&refs), &refs, accs, false)?;
            }
        }
        if let (Some(o), Some(t)) = (
            report.rows.iter().find(|r| r.target == target && r.mode == "oracle"),
            report.rows.iter().find(|r| r.target == target && r.mode == "ot_transfer"),
        ) {
            report.gap_targets += 1;
            if o.acc - t.acc > GAP_MARGIN {
                report.gap_count += 1;
            }
        }
    }
    Ok(report)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `distances.csv` (when given), `curves/<run>.csv`, `comparison.csv`
/// and `gapcount.txt` under `out_dir`.
pub fn write_reports(
    out_dir: &Path,
    distances: Option<&DistanceReport>,
    runs: &[RunResult],
    speedup_threshold: f64,
) -> Result<ComparisonReport> {
    let curves = out_dir.join("curves");
    fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
    if let Some(d) = distances {
        write(&out_dir.join("distances.csv"), &d.to_csv())?;
    }
    for r in runs {
        write(&curves.join(format!("{}.csv", r.run_id())), &r.curve.to_csv())?;
    }
    let report = build_comparison(runs, speedup_threshold)?;
    write(&out_dir.join("comparison.csv"), &report.to_csv())?;
    write(&out_dir.join("gapcount.txt"), &report.gap_text())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supernet::TrainingCurve;

    fn run(mode: RunMode, target: &str, source: Option<&str>, acc: f64, seed: u64) -> RunResult {
        RunResult {
            mode,
            target: target.into(),
            source: source.map(Into::into),
            final_accuracy: acc,
            retrained_accuracy: None,
            curve: TrainingCurve::default(),
            seed,
            wall_clock_seconds: 0.0,
        }
    }

    #[test]
    fn four_decimal_relative_improvements() {
        let runs = vec![
            run(RunMode::Scratch, "crs", None, 0.49, 0),
            run(RunMode::OtTransfer, "crs", Some("a"), 0.62, 0),
            run(RunMode::Scratch, "ins", None, 0.5, 0),
            run(RunMode::OtTransfer, "ins", Some("b"), 0.4486, 0),
        ];
        let csv = build_comparison(&runs, 0.7).unwrap().to_csv();
        assert!(csv.contains("crs,ot_transfer,a,0.62,0.2653,\n"), "{csv}");
        assert!(csv.contains("ins,ot_transfer,b,0.4486,-0.1028,\n"), "{csv}");
        assert!(csv.contains("crs,scratch,,0.49,0.0000,\n"), "{csv}");
    }

    #[test]
    fn oracle_rows_take_the_best_arm_per_seed() {
        let mut runs = vec![run(RunMode::Scratch, "t", None, 0.5, 0), run(RunMode::OtTransfer, "t", Some("b"), 0.55, 0)];
        runs.push(run(RunMode::GridSource("a".into()), "t", Some("a"), 0.7, 0));
        runs.push(run(RunMode::GridSource("b".into()), "t", Some("b"), 0.55, 0));
        runs.push(run(RunMode::GridSource("c".into()), "t", Some("c"), 0.4, 0));
        let r = build_comparison(&runs, 0.7).unwrap();
        assert_eq!(r.row("t", "oracle").unwrap().source, "a");
        assert_eq!(r.row("t", "oracle").unwrap().acc, 0.7);
        assert_eq!(r.row("t", "worst").unwrap().source, "c");
        assert_eq!((r.gap_count, r.gap_targets), (1, 1));
    }
}
