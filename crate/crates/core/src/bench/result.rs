use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, NMSE_SENTINEL_DB};

pub const CSV_HEADER: &str = "experiment,sweep_param,value,estimator,snr_db,eta,nmse_db_mean,nmse_db_stderr,trials,flags";

/// Result of one estimator on one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// `||h - ĥ||^2 / ||h||^2`.
    Ratio(f64),
    IllPosed,
}

/// One (sweep point, estimator) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub experiment: String,
    pub sweep_param: String,
    pub value: String,
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub eta: f64,
    /// Per-trial outcomes in trial order; kept for paired comparisons.
    pub outcomes: Vec<Outcome>,
}

/// `10 log10` of the mean ratio with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmseSummary {
    pub mean_db: f64,
    pub stderr_db: Option<f64>,
    pub trials: usize,
    pub exact: bool,
}

impl SweepRow {
    pub fn ratios(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter_map(|o| match o {
                Outcome::Ratio(r) => Some(*r),
                Outcome::IllPosed => None,
            })
            .collect()
    }

    pub fn ill_posed_count(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(o, Outcome::IllPosed)).count()
    }

    /// `None` when every trial was ill-posed.
    pub fn summary(&self) -> Option<NmseSummary> {
        let r = self.ratios();
        let n = r.len();
        if n == 0 {
            return None;
        }
        let mean = r.iter().sum::<f64>() / n as f64;
        if mean == 0.0 {
            return Some(NmseSummary { mean_db: NMSE_SENTINEL_DB, stderr_db: None, trials: n, exact: true });
        }
        let stderr_db = (n > 1).then(|| {
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            10.0 / std::f64::consts::LN_10 * (var / n as f64).sqrt() / mean
        });
        Some(NmseSummary { mean_db: 10.0 * mean.log10(), stderr_db, trials: n, exact: false })
    }

    pub fn mean_db(&self) -> Option<f64> {
        self.summary().map(|s| s.mean_db)
    }

    pub fn flags(&self) -> String {
        let ill = self.ill_posed_count();
        let mut flags = Vec::new();
        if ill == self.outcomes.len() {
            flags.push("ill-posed".to_string());
        } else if ill > 0 {
            flags.push(format!("ill-posed={ill}/{}", self.outcomes.len()));
        }
        if self.summary().is_some_and(|s| s.exact) {
            flags.push("exact".to_string());
        }
        flags.join(";")
    }

    fn csv_line(&self) -> String {
        let s = self.summary();
        let mean = s.map(|s| format!("{:.6}", s.mean_db)).unwrap_or_default();
        let se = s.and_then(|s| s.stderr_db).map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.sweep_param,
            self.value,
            self.estimator.id(),
            self.snr_db,
            self.eta,
            mean,
            se,
            s.map_or(0, |s| s.trials),
            self.flags()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn find(&self, estimator: EstimatorKind, pred: impl Fn(&SweepRow) -> bool) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.estimator == estimator && pred(r))
    }

    /// True when at least one row exists and every row is fully ill-posed.
    pub fn all_ill_posed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.summary().is_none())
    }
}

/// A parsed CSV line; numeric cells stay optional because ill-posed rows
/// leave them empty.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub experiment: String,
    pub sweep_param: String,
    pub value: String,
    pub estimator: String,
    pub snr_db: f64,
    pub eta: f64,
    pub nmse_db_mean: Option<f64>,
    pub nmse_db_stderr: Option<f64>,
    pub trials: usize,
    pub flags: String,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format("not a sweep CSV (header mismatch)".into()));
    }
    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse().map_err(|_| Error::Format(format!("line {line}: bad number {s:?}")))
    };
    let opt = |s: &str, line: usize| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s, line).map(Some) } };
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(Error::Format(format!("line {line}: expected 10 fields, got {}", f.len())));
            }
            Ok(CsvRecord {
                experiment: f[0].into(),
                sweep_param: f[1].into(),
                value: f[2].into(),
                estimator: f[3].into(),
                snr_db: num(f[4], line)?,
                eta: num(f[5], line)?,
                nmse_db_mean: opt(f[6], line)?,
                nmse_db_stderr: opt(f[7], line)?,
                trials: f[8].parse().map_err(|_| Error::Format(format!("line {line}: bad trial count")))?,
                flags: f[9].into(),
            })
        })
        .collect()
}

/// Gnuplot data: one index block per curve, separated by two blank lines.
///
/// Curves are keyed by `(sweep_param, value, estimator)`; the abscissa is
/// the swept quantity for SNR and pilot sweeps, otherwise the SNR. Ill-posed
/// points are commented out so gaps stay visible.
pub fn csv_to_dat(records: &[CsvRecord]) -> String {
    let mut curves: BTreeMap<(String, String, String), Vec<&CsvRecord>> = BTreeMap::new();
    for r in records {
        let key = match r.sweep_param.as_str() {
            "snr_db" | "eta" => (r.sweep_param.clone(), String::new(), r.estimator.clone()),
            _ => (r.sweep_param.clone(), r.value.clone(), r.estimator.clone()),
        };
        curves.entry(key).or_default().push(r);
    }
    let mut out = String::new();
    for (i, ((param, value, est), rows)) in curves.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let exp = rows.first().map(|r| r.experiment.as_str()).unwrap_or("");
        let _ = writeln!(out, "# experiment={exp} estimator={est} {param}{}", if value.is_empty() { String::new() } else { format!("={value}") });
        let x_name = if param == "eta" { "eta" } else { "snr_db" };
        let _ = writeln!(out, "# {x_name} nmse_db_mean nmse_db_stderr trials");
        for r in rows {
            let x = if param == "eta" { r.eta } else { r.snr_db };
            match r.nmse_db_mean {
                Some(m) => {
                    let _ = writeln!(out, "{x} {m} {} {}", r.nmse_db_stderr.unwrap_or(0.0), r.trials);
                }
                None => {
                    let _ = writeln!(out, "# {x} {}", r.flags);
                }
            }
        }
    }
    out
}
