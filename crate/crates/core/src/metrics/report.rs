//! Per-file evaluation and aggregation into a report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{iou_flags, line_abs_errors, ErrorCdf, Iou, WITHIN_THRESHOLDS};
use crate::preprocess::{BoundaryLine, Echogram, Orientation, Segmentation};
use crate::stats::{mean, sem};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Good-data mask.
    Overall,
    /// Pixels above the entrained-air line.
    EntrainedAir,
    /// Pixels beyond the far boundary (below the seafloor when
    /// downfacing, above the surface when upfacing).
    FarBoundary,
    Passive,
    BadPeriod,
    BadPatch,
}

impl OutputKind {
    pub const ALL: [OutputKind; 6] = [
        Self::Overall,
        Self::EntrainedAir,
        Self::FarBoundary,
        Self::Passive,
        Self::BadPeriod,
        Self::BadPatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Overall => "overall",
            Self::EntrainedAir => "entrained_air",
            Self::FarBoundary => "far_boundary",
            Self::Passive => "passive",
            Self::BadPeriod => "bad_period",
            Self::BadPatch => "bad_patch",
        }
    }
}

/// Sufficient statistics of one line comparison.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LineCounts {
    pub errors: Vec<f64>,
}

impl LineCounts {
    pub fn n(&self) -> usize {
        self.errors.len()
    }

    pub fn sum_abs(&self) -> f64 {
        self.errors.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.errors.iter().map(|e| e * e).sum()
    }

    pub fn within_count(&self, t: f64) -> usize {
        self.errors.iter().filter(|&&e| e < t).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileOutput {
    pub iou: Iou,
    /// The target mask had no pixels.
    pub target_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStats {
    pub name: String,
    pub outputs: BTreeMap<OutputKind, FileOutput>,
    /// Keyed by line name: `entrained_air`, `seafloor` or `surface`.
    pub lines: BTreeMap<String, LineCounts>,
}

fn above_mask(line: &BoundaryLine, depths: &[f64]) -> Matrix<bool> {
    Matrix::from_fn(line.len(), depths.len(), |i, j| line.valid[i] && depths[j] < line.depths[i])
}

fn below_mask(line: &BoundaryLine, depths: &[f64]) -> Matrix<bool> {
    Matrix::from_fn(line.len(), depths.len(), |i, j| line.valid[i] && depths[j] > line.depths[i])
}

/// Compares a predicted annotation with the reference one on a
/// standardized echogram. `target_good` is the reference good-data mask.
pub fn evaluate_file(
    name: &str,
    echogram: &Echogram,
    target: &Segmentation,
    target_good: &Matrix<bool>,
    predicted: &Segmentation,
) -> Result<FileStats> {
    let n = echogram.n_pings();
    if target.n_pings() != n || predicted.n_pings() != n {
        return Err(Error::Alignment("segmentation and echogram ping counts differ".into()));
    }
    let depths = &echogram.depths;
    let up = echogram.orientation == Orientation::Upfacing;
    let mut outputs = BTreeMap::new();
    let mut put = |kind: OutputKind, a: &[bool], b: &[bool]| -> Result<()> {
        outputs.insert(
            kind,
            FileOutput {
                iou: iou_flags(a, b)?,
                target_empty: !a.iter().any(|&x| x),
            },
        );
        Ok(())
    };
    let pred_good = predicted.good_mask(echogram);
    put(OutputKind::Overall, target_good.as_slice(), pred_good.as_slice())?;
    put(
        OutputKind::EntrainedAir,
        above_mask(&target.air, depths).as_slice(),
        above_mask(&predicted.air, depths).as_slice(),
    )?;
    let far = |s: &Segmentation| {
        if up {
            above_mask(&s.surface, depths)
        } else {
            below_mask(&s.seafloor, depths)
        }
    };
    put(OutputKind::FarBoundary, far(target).as_slice(), far(predicted).as_slice())?;
    put(OutputKind::Passive, &target.passive_flags(), &predicted.passive_flags())?;
    put(OutputKind::BadPeriod, &target.bad_period_flags(), &predicted.bad_period_flags())?;
    put(
        OutputKind::BadPatch,
        target.regions.patches.as_slice(),
        predicted.regions.patches.as_slice(),
    )?;

    let exclude: Vec<bool> = target
        .passive_flags()
        .iter()
        .zip(target.bad_period_flags())
        .map(|(&p, b)| p || b)
        .collect();
    let mut lines = BTreeMap::new();
    lines.insert(
        "entrained_air".to_string(),
        LineCounts { errors: line_abs_errors(&target.air, &predicted.air, &exclude)? },
    );
    let (far_name, t_line, p_line) = if up {
        ("surface", &target.surface, &predicted.surface)
    } else {
        ("seafloor", &target.seafloor, &predicted.seafloor)
    };
    lines.insert(far_name.to_string(), LineCounts { errors: line_abs_errors(t_line, p_line, &exclude)? });
    Ok(FileStats { name: name.to_string(), outputs, lines })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    /// Sum counts over files, then divide.
    Pooled,
    /// Average per-file statistics.
    PerFile,
}

impl std::str::FromStr for AggregateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Self::Pooled),
            "per-file" | "per_file" => Ok(Self::PerFile),
            _ => Err(Error::Config(format!("unknown aggregation mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub value: f64,
    /// Standard error over eligible files; `None` with fewer than two.
    pub sem: Option<f64>,
    /// Files eligible for the SEM.
    pub n_files: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    pub n_pings: usize,
    pub mae: Statistic,
    pub rmse: Statistic,
    pub within: [Statistic; 3],
    /// `(threshold, fraction <= threshold)` of the pooled errors.
    pub cdf: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: AggregateMode,
    pub n_files: usize,
    pub iou: BTreeMap<OutputKind, Statistic>,
    pub lines: BTreeMap<String, LineSummary>,
}

fn stat(value: f64, per_file: &[f64]) -> Statistic {
    Statistic { value, sem: sem(per_file), n_files: per_file.len() }
}

fn cdf_thresholds() -> Vec<f64> {
    (0..=100).map(|k| k as f64 * 0.05).collect()
}

/// Combines per-file statistics. Files whose target mask is empty for an
/// output are left out of that output's per-file mean and SEM but still
/// contribute their counts to pooled ratios.
pub fn aggregate(files: &[FileStats], mode: AggregateMode) -> Result<MetricsReport> {
    if files.is_empty() {
        return Err(Error::Undefined("no files to aggregate".into()));
    }
    let mut iou_out = BTreeMap::new();
    for kind in OutputKind::ALL {
        let entries: Vec<&FileOutput> = files.iter().filter_map(|f| f.outputs.get(&kind)).collect();
        if entries.is_empty() {
            continue;
        }
        let eligible: Vec<f64> = entries.iter().filter(|e| !e.target_empty).map(|e| e.iou.value).collect();
        let value = match mode {
            AggregateMode::Pooled => {
                let inter: usize = entries.iter().map(|e| e.iou.intersection).sum();
                let union: usize = entries.iter().map(|e| e.iou.union).sum();
                Iou::from_counts(inter, union).value
            }
            AggregateMode::PerFile => match mean(&eligible) {
                Some(m) => m,
                None => mean(&entries.iter().map(|e| e.iou.value).collect::<Vec<_>>()).unwrap_or(1.0),
            },
        };
        iou_out.insert(kind, stat(value, &eligible));
    }

    let mut names: Vec<&String> = files.iter().flat_map(|f| f.lines.keys()).collect();
    names.sort();
    names.dedup();
    let mut lines = BTreeMap::new();
    for name in names {
        let counts: Vec<&LineCounts> = files.iter().filter_map(|f| f.lines.get(name)).filter(|c| c.n() > 0).collect();
        let total: usize = counts.iter().map(|c| c.n()).sum();
        if total == 0 {
            continue;
        }
        let file_mae: Vec<f64> = counts.iter().map(|c| c.sum_abs() / c.n() as f64).collect();
        let file_mse: Vec<f64> = counts.iter().map(|c| c.sum_sq() / c.n() as f64).collect();
        let file_rmse: Vec<f64> = file_mse.iter().map(|m| m.sqrt()).collect();
        let (mae, rmse) = match mode {
            AggregateMode::Pooled => {
                let abs: f64 = counts.iter().map(|c| c.sum_abs()).sum();
                let sq: f64 = counts.iter().map(|c| c.sum_sq()).sum();
                (abs / total as f64, (sq / total as f64).sqrt())
            }
            AggregateMode::PerFile => (
                mean(&file_mae).unwrap_or(f64::NAN),
                mean(&file_mse).unwrap_or(f64::NAN).sqrt(),
            ),
        };
        let within = WITHIN_THRESHOLDS.map(|t| {
            let per_file: Vec<f64> = counts.iter().map(|c| c.within_count(t) as f64 / c.n() as f64).collect();
            let value = match mode {
                AggregateMode::Pooled => {
                    counts.iter().map(|c| c.within_count(t)).sum::<usize>() as f64 / total as f64
                }
                AggregateMode::PerFile => mean(&per_file).unwrap_or(f64::NAN),
            };
            stat(value, &per_file)
        });
        let pooled: Vec<f64> = counts.iter().flat_map(|c| c.errors.iter().copied()).collect();
        let cdf = ErrorCdf::new(&pooled)?.curve(&cdf_thresholds());
        lines.insert(
            name.clone(),
            LineSummary {
                n_pings: total,
                mae: stat(mae, &file_mae),
                rmse: stat(rmse, &file_rmse),
                within,
                cdf,
            },
        );
    }
    Ok(MetricsReport { mode, n_files: files.len(), iou: iou_out, lines })
}

fn fmt_sem(s: &Statistic, scale: f64) -> String {
    s.sem.map_or("-".to_string(), |v| format!("{:.3}", v * scale))
}

impl MetricsReport {
    fn rows(&self) -> Vec<(String, String, f64, Statistic)> {
        let mut rows = Vec::new();
        for (kind, s) in &self.iou {
            rows.push((format!("iou_{}", kind.name()), "%".to_string(), 100.0, *s));
        }
        for (name, l) in &self.lines {
            rows.push((format!("{name}_mae"), "m".to_string(), 1.0, l.mae));
            rows.push((format!("{name}_rmse"), "m".to_string(), 1.0, l.rmse));
            for (t, s) in WITHIN_THRESHOLDS.iter().zip(&l.within) {
                rows.push((format!("{name}_within_{t}m"), "%".to_string(), 100.0, *s));
            }
        }
        rows
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>10}  {:>8}  unit  files", "metric", "value", "sem");
        for (name, unit, scale, s) in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.3}  {:>8}  {:<4}  {}",
                name,
                s.value * scale,
                fmt_sem(&s, scale),
                unit,
                s.n_files
            );
        }
        let _ = writeln!(out, "files: {} ({:?})", self.n_files, self.mode);
        out
    }

    /// `metric,value,sem,unit,files` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,sem,unit,files\n");
        for (name, unit, scale, s) in self.rows() {
            let sem = s.sem.map_or(String::new(), |v| format!("{}", v * scale));
            let _ = writeln!(out, "{name},{},{sem},{unit},{}", s.value * scale, s.n_files);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(pairs: &[(usize, usize)]) -> FileStats {
        let mut outputs = BTreeMap::new();
        let (i, u) = pairs[0];
        outputs.insert(
            OutputKind::Overall,
            FileOutput { iou: Iou::from_counts(i, u), target_empty: u == 0 },
        );
        FileStats { name: "f".into(), outputs, lines: BTreeMap::new() }
    }

    #[test]
    fn pooled_versus_per_file() {
        let files = [file(&[(3, 4)]), file(&[(1, 4)])];
        let pooled = aggregate(&files, AggregateMode::Pooled).unwrap();
        let per = aggregate(&files, AggregateMode::PerFile).unwrap();
        assert_eq!(pooled.iou[&OutputKind::Overall].value, 0.5);
        assert_eq!(per.iou[&OutputKind::Overall].value, 0.5);
        let files = [file(&[(3, 4)]), file(&[(2, 8)])];
        let pooled = aggregate(&files, AggregateMode::Pooled).unwrap();
        let per = aggregate(&files, AggregateMode::PerFile).unwrap();
        assert!((pooled.iou[&OutputKind::Overall].value - 5.0 / 12.0).abs() < 1e-15);
        assert_eq!(per.iou[&OutputKind::Overall].value, 0.5);
    }

    #[test]
    fn single_file_modes_agree() {
        let mut f = file(&[(3, 5)]);
        f.lines.insert("entrained_air".into(), LineCounts { errors: vec![0.2, 1.4, 3.0] });
        let a = aggregate(std::slice::from_ref(&f), AggregateMode::Pooled).unwrap();
        let b = aggregate(std::slice::from_ref(&f), AggregateMode::PerFile).unwrap();
        assert_eq!(a.iou, b.iou);
        assert_eq!(a.lines, b.lines);
        assert_eq!(a.iou[&OutputKind::Overall].sem, None);
    }

    #[test]
    fn empty_target_excluded_from_sem_only() {
        let files = [file(&[(3, 4)]), file(&[(1, 2)]), file(&[(0, 0)])];
        let pooled = aggregate(&files, AggregateMode::Pooled).unwrap();
        let s = pooled.iou[&OutputKind::Overall];
        assert_eq!(s.n_files, 2);
        assert!((s.value - 4.0 / 6.0).abs() < 1e-15);
        assert!((s.sem.unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn rmse_is_root_of_mean_mse() {
        let mut a = file(&[(1, 1)]);
        a.lines.insert("entrained_air".into(), LineCounts { errors: vec![1.0] });
        let mut b = file(&[(1, 1)]);
        b.lines.insert("entrained_air".into(), LineCounts { errors: vec![3.0, 3.0, 3.0] });
        let per = aggregate(&[a.clone(), b.clone()], AggregateMode::PerFile).unwrap();
        assert_eq!(per.lines["entrained_air"].rmse.value, 5.0f64.sqrt());
        assert_eq!(per.lines["entrained_air"].mae.value, 2.0);
        let pooled = aggregate(&[a, b], AggregateMode::Pooled).unwrap();
        assert_eq!(pooled.lines["entrained_air"].rmse.value, (28.0f64 / 4.0).sqrt());
        assert!(pooled.to_table().contains("entrained_air_mae"));
        assert!(pooled.to_csv().starts_with("metric,value,sem,unit,files\n"));
    }
}
