//! Confusion matrices and the reported metrics: accuracy, macro precision,
//! macro recall. Macro averaging is unweighted over all k classes; a class
//! with a zero denominator contributes 0 and still counts in the mean.

use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("index {index} out of range for {k} classes")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("empty matrix: no samples recorded")]
    EmptyMatrix,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed csv: {0}")]
    MalformedCsv(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// K x K count matrix; rows are true classes, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, true_label: usize, pred_label: usize) -> u64 {
        self.counts[true_label * self.k + pred_label]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn update(&mut self, true_label: usize, pred_label: usize) -> Result<(), MetricsError> {
        for &idx in &[true_label, pred_label] {
            if idx >= self.k {
                return Err(MetricsError::IndexOutOfRange { index: idx, k: self.k });
            }
        }
        self.counts[true_label * self.k + pred_label] += 1;
        Ok(())
    }

    pub fn from_pairs(k: usize, pairs: &[(usize, usize)]) -> Result<Self, MetricsError> {
        let mut cm = Self::new(k);
        for &(t, p) in pairs {
            cm.update(t, p)?;
        }
        Ok(cm)
    }

    /// Elementwise sum, for merging evaluation shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.k != other.k {
            return Err(MetricsError::ShapeMismatch(format!(
                "cannot merge {}x{} into {}x{}",
                other.k, other.k, self.k, self.k
            )));
        }
        for (a, &b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn accuracy(&self) -> Result<f64, MetricsError> {
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::EmptyMatrix);
        }
        let trace: u64 = (0..self.k).map(|c| self.count(c, c)).sum();
        Ok(trace as f64 / total as f64)
    }

    pub fn macro_precision_recall(&self) -> Result<(f64, f64), MetricsError> {
        if self.total() == 0 {
            return Err(MetricsError::EmptyMatrix);
        }
        let mut precision_sum = 0.0;
        let mut recall_sum = 0.0;
        for c in 0..self.k {
            let tp = self.count(c, c) as f64;
            let col_sum: u64 = (0..self.k).map(|r| self.count(r, c)).sum();
            let row_sum: u64 = (0..self.k).map(|p| self.count(c, p)).sum();
            if col_sum > 0 {
                precision_sum += tp / col_sum as f64;
            }
            if row_sum > 0 {
                recall_sum += tp / row_sum as f64;
            }
        }
        Ok((precision_sum / self.k as f64, recall_sum / self.k as f64))
    }
}

/// One row of metrics.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub task: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

/// `confusion_<task>.csv`: a header row of class names, then k rows of k
/// integer counts.
pub fn write_confusion_csv(cm: &ConfusionMatrix, class_names: &[&str], path: &Path) -> Result<(), MetricsError> {
    if class_names.len() != cm.k() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} class names for a {}-class matrix",
            class_names.len(),
            cm.k()
        )));
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", class_names.join(","))?;
    for r in 0..cm.k() {
        let row: Vec<String> = (0..cm.k()).map(|c| cm.count(r, c).to_string()).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_confusion_csv(path: &Path) -> Result<(Vec<String>, ConfusionMatrix), MetricsError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| MetricsError::MalformedCsv("empty file".into()))?;
    let names: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let k = names.len();
    let mut cm = ConfusionMatrix::new(k);
    for (r, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        if r >= k {
            return Err(MetricsError::MalformedCsv(format!("more than {k} rows")));
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != k {
            return Err(MetricsError::MalformedCsv(format!(
                "row {r} has {} cells, expected {k}",
                cells.len()
            )));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: u64 = cell
                .parse()
                .map_err(|_| MetricsError::MalformedCsv(format!("bad count {cell:?}")))?;
            cm.counts[r * k + c] = v;
        }
    }
    Ok((names, cm))
}

/// `metrics.csv` with the exact header `task,accuracy,precision,recall` and
/// values printed to 4 decimal places.
pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<(), MetricsError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "task,accuracy,precision,recall")?;
    for r in rows {
        writeln!(f, "{},{:.4},{:.4},{:.4}", r.task, r.accuracy, r.precision, r.recall)?;
    }
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, MetricsError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| MetricsError::MalformedCsv("empty file".into()))?;
    if header != "task,accuracy,precision,recall" {
        return Err(MetricsError::MalformedCsv(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(MetricsError::MalformedCsv(format!("bad row {line:?}")));
        }
        let parse = |s: &str| -> Result<f64, MetricsError> {
            s.parse().map_err(|_| MetricsError::MalformedCsv(format!("bad number {s:?}")))
        };
        rows.push(MetricsRow {
            task: cells[0].to_string(),
            accuracy: parse(cells[1])?,
            precision: parse(cells[2])?,
            recall: parse(cells[3])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_update() {
        let mut cm = ConfusionMatrix::new(5);
        cm.update(2, 3).unwrap();
        assert_eq!(cm.count(2, 3), 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn n_updates_total_n() {
        let mut cm = ConfusionMatrix::new(3);
        for i in 0..27 {
            cm.update(i % 3, (i / 3) % 3).unwrap();
        }
        assert_eq!(cm.total(), 27);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut cm = ConfusionMatrix::new(5);
        assert!(matches!(
            cm.update(5, 0),
            Err(MetricsError::IndexOutOfRange { index: 5, k: 5 })
        ));
    }

    #[test]
    fn accuracy_cases() {
        let cm = ConfusionMatrix::from_pairs(2, &[(0, 0); 4]).unwrap();
        assert_eq!(cm.accuracy().unwrap(), 1.0);

        // [[8,2],[1,9]] -> 17/20
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..8 {
            cm.update(0, 0).unwrap();
        }
        for _ in 0..2 {
            cm.update(0, 1).unwrap();
        }
        cm.update(1, 0).unwrap();
        for _ in 0..9 {
            cm.update(1, 1).unwrap();
        }
        assert!((cm.accuracy().unwrap() - 0.85).abs() < 1e-12);

        // Uniform 2x2 -> 0.5.
        let mut cm = ConfusionMatrix::new(2);
        for t in 0..2 {
            for p in 0..2 {
                for _ in 0..5 {
                    cm.update(t, p).unwrap();
                }
            }
        }
        assert_eq!(cm.accuracy().unwrap(), 0.5);
    }

    #[test]
    fn macro_precision_recall_hand_oracle() {
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..8 {
            cm.update(0, 0).unwrap();
        }
        for _ in 0..2 {
            cm.update(0, 1).unwrap();
        }
        cm.update(1, 0).unwrap();
        for _ in 0..9 {
            cm.update(1, 1).unwrap();
        }
        let (p, r) = cm.macro_precision_recall().unwrap();
        assert!((p - (8.0 / 9.0 + 9.0 / 11.0) / 2.0).abs() < 1e-12);
        assert!((r - 0.85).abs() < 1e-12);
    }

    #[test]
    fn perfect_diagonal() {
        let cm = ConfusionMatrix::from_pairs(3, &[(0, 0), (1, 1), (2, 2)]).unwrap();
        let (p, r) = cm.macro_precision_recall().unwrap();
        assert_eq!((p, r), (1.0, 1.0));
    }

    #[test]
    fn absent_class_contributes_zero() {
        // Class 2 never appears and is never predicted: macro means divide
        // by k = 3 regardless.
        let cm = ConfusionMatrix::from_pairs(3, &[(0, 0), (1, 1)]).unwrap();
        let (p, r) = cm.macro_precision_recall().unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_matrix_is_error() {
        let cm = ConfusionMatrix::new(4);
        assert!(matches!(cm.accuracy(), Err(MetricsError::EmptyMatrix)));
        assert!(matches!(cm.macro_precision_recall(), Err(MetricsError::EmptyMatrix)));
    }

    #[test]
    fn merge_adds_counts() {
        let a = ConfusionMatrix::from_pairs(2, &[(0, 0), (1, 0)]).unwrap();
        let b = ConfusionMatrix::from_pairs(2, &[(0, 0), (1, 1)]).unwrap();
        let mut m = a.clone();
        m.merge(&b).unwrap();
        assert_eq!(m.count(0, 0), 2);
        assert_eq!(m.count(1, 0), 1);
        assert_eq!(m.count(1, 1), 1);
    }

    #[test]
    fn confusion_csv_roundtrip() {
        let cm = ConfusionMatrix::from_pairs(3, &[(0, 0), (0, 2), (1, 1), (2, 2), (2, 2)]).unwrap();
        let dir = std::env::temp_dir().join("leafnet_metrics_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("confusion_x.csv");
        write_confusion_csv(&cm, &["a", "b", "c"], &path).unwrap();
        let (names, back) = read_confusion_csv(&path).unwrap();
        assert_eq!(names, vec!["a", "b", "c"]);
        assert_eq!(back, cm);
    }

    #[test]
    fn metrics_csv_header_contract() {
        let dir = std::env::temp_dir().join("leafnet_metrics_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("metrics.csv");
        write_metrics_csv(
            &[MetricsRow {
                task: "stress".into(),
                accuracy: 0.912345,
                precision: 0.85,
                recall: 0.5,
            }],
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "task,accuracy,precision,recall");
        assert_eq!(lines.next().unwrap(), "stress,0.9123,0.8500,0.5000");
        let rows = read_metrics_csv(&path).unwrap();
        assert_eq!(rows[0].task, "stress");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let cm = ConfusionMatrix::from_pairs(2, &[(0, 0)]).unwrap();
        let path = Path::new("/nonexistent_dir_for_leafnet/confusion.csv");
        assert!(matches!(
            write_confusion_csv(&cm, &["a", "b"], path),
            Err(MetricsError::Io(_))
        ));
    }
}
