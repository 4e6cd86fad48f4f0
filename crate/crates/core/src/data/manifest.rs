//! Dataset manifests: `path,subject_id,eye_side[,distance_cm][,session]`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Result};

/// Which eye. Labelling is positional in the image: `Left` is the eye with
/// the smaller x coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EyeSide {
    Left,
    Right,
}

impl EyeSide {
    pub fn as_str(self) -> &'static str {
        match self {
            EyeSide::Left => "left",
            EyeSide::Right => "right",
        }
    }

    pub fn index(self) -> usize {
        match self {
            EyeSide::Left => 0,
            EyeSide::Right => 1,
        }
    }

    pub fn parse(s: &str) -> Option<EyeSide> {
        match s {
            "left" => Some(EyeSide::Left),
            "right" => Some(EyeSide::Right),
            _ => None,
        }
    }
}

impl fmt::Display for EyeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub subject_id: String,
    pub eye_side: EyeSide,
    pub distance_cm: Option<f64>,
    pub session: Option<String>,
}

/// Validated list of rows with unique paths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    rows: Vec<ManifestRow>,
    /// Directory that relative row paths are resolved against.
    base: PathBuf,
}

/// Person-disjoint partition of a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
}

impl Manifest {
    pub fn from_rows(rows: Vec<ManifestRow>, base: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in rows.iter().enumerate() {
            if !seen.insert(r.path.as_str()) {
                return Err(DataError::Manifest { row: i + 1, message: format!("duplicate path {}", r.path) });
            }
            if r.distance_cm.is_some_and(|d| !(d.is_finite() && d > 0.0)) {
                return Err(DataError::Manifest { row: i + 1, message: "distance_cm must be positive".into() });
            }
        }
        Ok(Self { rows, base: base.into() })
    }

    /// Parses CSV text; row numbers in errors count data rows from 1.
    pub fn parse(text: &str, base: impl Into<PathBuf>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let expected = ["path", "subject_id", "eye_side"];
        if headers.len() < 3 || headers.iter().take(3).ne(expected) {
            return Err(DataError::Manifest {
                row: 0,
                message: format!("header must start with path,subject_id,eye_side, got {:?}", headers.iter().collect::<Vec<_>>()),
            });
        }
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (dist_col, session_col) = (col("distance_cm"), col("session"));
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| DataError::Manifest { row, message: e.to_string() })?;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let eye_side = EyeSide::parse(field(2))
                .ok_or_else(|| DataError::Manifest { row, message: format!("unknown eye_side {:?}", field(2)) })?;
            if field(0).is_empty() || field(1).is_empty() {
                return Err(DataError::Manifest { row, message: "empty path or subject_id".into() });
            }
            let distance_cm = match dist_col.map(field).filter(|s| !s.is_empty()) {
                None => None,
                Some(s) => Some(
                    s.parse::<f64>()
                        .map_err(|_| DataError::Manifest { row, message: format!("bad distance_cm {s:?}") })?,
                ),
            };
            let session = session_col.map(field).filter(|s| !s.is_empty()).map(str::to_string);
            rows.push(ManifestRow { path: field(0).into(), subject_id: field(1).into(), eye_side, distance_cm, session });
        }
        Self::from_rows(rows, base)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn to_csv(&self) -> String {
        let with_dist = self.rows.iter().any(|r| r.distance_cm.is_some());
        let with_session = self.rows.iter().any(|r| r.session.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["path", "subject_id", "eye_side"];
        if with_dist {
            header.push("distance_cm");
        }
        if with_session {
            header.push("session");
        }
        let written = w.write_record(&header).and_then(|_| {
            for r in &self.rows {
                let mut rec = vec![r.path.clone(), r.subject_id.clone(), r.eye_side.to_string()];
                if with_dist {
                    rec.push(r.distance_cm.map(|d| d.to_string()).unwrap_or_default());
                }
                if with_session {
                    rec.push(r.session.clone().unwrap_or_default());
                }
                w.write_record(&rec)?;
            }
            Ok(())
        });
        written.expect("writing CSV to memory cannot fail");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| DataError::io(path, e))
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn base(&self) -> &Path {
        &self.base
    }

    /// Filesystem location of a row's image.
    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        let p = Path::new(&row.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.subject_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Rows whose subject is in `keep`.
    pub fn filter_subjects(&self, keep: &HashSet<&str>) -> Manifest {
        Manifest {
            rows: self.rows.iter().filter(|r| keep.contains(r.subject_id.as_str())).cloned().collect(),
            base: self.base.clone(),
        }
    }

    /// Shuffles subjects with `seed` and assigns the first
    /// `round(f_train·n)` to training, the next `round(f_val·n)` to
    /// validation and the rest to test.
    pub fn split(&self, seed: u64, fractions: (f64, f64, f64)) -> Result<Split> {
        let (a, b, c) = fractions;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-6 {
            return Err(DataError::InvalidParameter(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
        }
        let mut ids = self.subjects();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len();
        let n_train = ((a * n as f64).round() as usize).min(n);
        let n_val = ((b * n as f64).round() as usize).min(n - n_train);
        let pick = |r: std::ops::Range<usize>| {
            let keep: HashSet<&str> = ids[r].iter().map(String::as_str).collect();
            self.filter_subjects(&keep)
        };
        Ok(Split { train: pick(0..n_train), val: pick(n_train..n_train + n_val), test: pick(n_train + n_val..n) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_roundtrip() {
        let text = "path,subject_id,eye_side,distance_cm\na.pgm,s1,left,30\nb.pgm,s1,right,\n";
        let m = Manifest::parse(text, "").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.rows()[0].distance_cm, Some(30.0));
        assert_eq!(m.rows()[1].distance_cm, None);
        assert_eq!(Manifest::parse(&m.to_csv(), "").unwrap(), m);
        let quoted = Manifest::parse("path,subject_id,eye_side\n\"a,b.pgm\",s1,left\n", "").unwrap();
        assert_eq!(quoted.rows()[0].path, "a,b.pgm");
        assert_eq!(Manifest::parse(&quoted.to_csv(), "").unwrap(), quoted);
    }

    #[test]
    fn errors_carry_row_numbers() {
        let dup = "path,subject_id,eye_side\na,s1,left\na,s2,left\n";
        assert_eq!(Manifest::parse(dup, "").unwrap_err().to_string(), "manifest row 2: duplicate path a");
        let side = "path,subject_id,eye_side\na,s1,up\n";
        assert!(Manifest::parse(side, "").unwrap_err().to_string().starts_with("manifest row 1: unknown eye_side"));
        assert!(Manifest::parse("file,id,side\n", "").is_err());
    }
}
