//! CSV manifest reader/writer. Header is exactly
//! `path,kind,stress,severity,split`; empty severity/split cells mean
//! absent. Image paths are stored as written (resolve them against the
//! manifest's directory).

use super::{DataError, DatasetKind, ManifestRecord, Split, StressClass};
use crate::imaging::SeverityClass;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST_HEADER: &str = "path,kind,stress,severity,split";

/// Parses and validates a manifest. With `check_files` set, every listed
/// image must exist relative to the manifest's directory.
pub fn load_manifest(path: &Path, check_files: bool) -> Result<Vec<ManifestRecord>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| DataError::MissingHeader(String::new()))?;
    if header.trim() != MANIFEST_HEADER {
        return Err(DataError::MissingHeader(header.to_string()));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 1; // 1-based, header is row 1
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(DataError::MalformedRow {
                row,
                msg: format!("expected 5 cells, got {}", cells.len()),
            });
        }
        let kind = DatasetKind::parse(cells[1]).ok_or_else(|| DataError::UnknownLabel {
            row,
            column: "kind",
            value: cells[1].to_string(),
        })?;
        let stress = StressClass::parse(cells[2]).ok_or_else(|| DataError::UnknownLabel {
            row,
            column: "stress",
            value: cells[2].to_string(),
        })?;
        let severity = if cells[3].is_empty() {
            None
        } else {
            Some(SeverityClass::parse(cells[3]).ok_or_else(|| DataError::UnknownLabel {
                row,
                column: "severity",
                value: cells[3].to_string(),
            })?)
        };
        if kind == DatasetKind::Leaf && severity.is_none() {
            return Err(DataError::MissingSeverity { row });
        }
        let split = if cells[4].is_empty() {
            None
        } else {
            Some(Split::parse(cells[4]).ok_or_else(|| DataError::UnknownLabel {
                row,
                column: "split",
                value: cells[4].to_string(),
            })?)
        };
        let rec_path = PathBuf::from(cells[0]);
        if check_files {
            let resolved = if rec_path.is_absolute() {
                rec_path.clone()
            } else {
                base.join(&rec_path)
            };
            if !resolved.exists() {
                return Err(DataError::FileNotFound(resolved));
            }
        }
        records.push(ManifestRecord {
            path: rec_path,
            kind,
            stress,
            severity,
            split,
        });
    }
    Ok(records)
}

pub fn save_manifest(records: &[ManifestRecord], path: &Path) -> Result<(), DataError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{MANIFEST_HEADER}")?;
    for r in records {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.path.display(),
            r.kind.as_str(),
            r.stress.as_str(),
            r.severity.map(|s| s.as_str()).unwrap_or(""),
            r.split.map(|s| s.as_str()).unwrap_or("")
        )?;
    }
    Ok(())
}

/// Resolves a record path against the manifest's directory.
pub fn resolve_record_path(manifest_path: &Path, record: &ManifestRecord) -> PathBuf {
    if record.path.is_absolute() {
        record.path.clone()
    } else {
        manifest_path.parent().unwrap_or_else(|| Path::new("")).join(&record.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_manifest(content: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("leafnet_manifest_{}", crate::checkpoint::crc32(content.as_bytes())));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("manifest.csv");
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn full_row_parses() {
        let p = temp_manifest("path,kind,stress,severity,split\nimg/a.ppm,leaf,rust,very_low,train\n");
        let recs = load_manifest(&p, false).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.path, PathBuf::from("img/a.ppm"));
        assert_eq!(r.kind, DatasetKind::Leaf);
        assert_eq!(r.stress, StressClass::Rust);
        assert_eq!(r.severity, Some(SeverityClass::VeryLow));
        assert_eq!(r.split, Some(Split::Train));
    }

    #[test]
    fn unknown_stress_rejected() {
        let p = temp_manifest("path,kind,stress,severity,split\na.ppm,leaf,mildew,low,\n");
        match load_manifest(&p, false) {
            Err(DataError::UnknownLabel { column: "stress", value, .. }) => assert_eq!(value, "mildew"),
            other => panic!("expected UnknownLabel, got {other:?}"),
        }
    }

    #[test]
    fn leaf_without_severity_rejected() {
        let p = temp_manifest("path,kind,stress,severity,split\na.ppm,leaf,rust,,\n");
        assert!(matches!(
            load_manifest(&p, false),
            Err(DataError::MissingSeverity { row: 2 })
        ));
    }

    #[test]
    fn symptom_without_severity_allowed() {
        let p = temp_manifest("path,kind,stress,severity,split\na.ppm,symptom,rust,,\n");
        let recs = load_manifest(&p, false).unwrap();
        assert_eq!(recs[0].severity, None);
    }

    #[test]
    fn bad_header_rejected() {
        let p = temp_manifest("file,kind,stress,severity,split\n");
        assert!(matches!(load_manifest(&p, false), Err(DataError::MissingHeader(_))));
    }

    #[test]
    fn missing_file_with_validation_flag() {
        let p = temp_manifest("path,kind,stress,severity,split\nnope.ppm,leaf,healthy,healthy,\n");
        assert!(matches!(load_manifest(&p, true), Err(DataError::FileNotFound(_))));
        // Without the flag it loads fine.
        assert_eq!(load_manifest(&p, false).unwrap().len(), 1);
    }

    #[test]
    fn roundtrip() {
        let recs = vec![
            ManifestRecord {
                path: PathBuf::from("images/x.ppm"),
                kind: DatasetKind::Leaf,
                stress: StressClass::CercosporaLeafSpot,
                severity: Some(SeverityClass::High),
                split: None,
            },
            ManifestRecord {
                path: PathBuf::from("images/y.ppm"),
                kind: DatasetKind::Symptom,
                stress: StressClass::Healthy,
                severity: None,
                split: Some(Split::Test),
            },
        ];
        let dir = std::env::temp_dir().join("leafnet_manifest_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("manifest.csv");
        save_manifest(&recs, &p).unwrap();
        let back = load_manifest(&p, false).unwrap();
        assert_eq!(back, recs);
    }
}
