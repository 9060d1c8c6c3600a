//! Parameter files (JSON) and data sets (CSV with a header row).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mle::ParamPoint;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parses and validates a parameter file:
/// `{"family": "t", "eta": [5], "mu": [..], "lambda": [..], "sigma": [[..], ..]}`.
pub fn parse_params(json: &str) -> Result<ParamPoint> {
    let pt: ParamPoint =
        serde_json::from_str(json).map_err(|e| Error::Input(format!("parameter file: {e}")))?;
    if pt.lambda.len() != pt.dim() || pt.sigma.len() != pt.dim() {
        return Err(Error::Input(format!(
            "parameter file: mu has {} entries, lambda {}, sigma {} rows",
            pt.dim(),
            pt.lambda.len(),
            pt.sigma.len()
        )));
    }
    pt.validate()?;
    Ok(pt)
}

pub fn read_params(path: &Path) -> Result<ParamPoint> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_params(&s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub source: Option<PathBuf>,
}

impl Dataset {
    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Dataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns.iter().position(|c| c == n).ok_or_else(|| {
                    Error::Input(format!(
                        "no column named '{n}' (have {})",
                        self.columns.join(", ")
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            columns: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i]).collect())
                .collect(),
            source: self.source.clone(),
        })
    }
}

/// Reads a CSV data set with a header row; lines starting with `#` are
/// skipped. Every value must be a finite positive number.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Input(format!("CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.is_empty() || columns.iter().all(|c| c.is_empty()) {
        return Err(Error::Input("CSV header row is missing".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("CSV: {e}")))?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let row: Vec<f64> = rec
            .iter()
            .zip(&columns)
            .map(|(v, name)| {
                let x: f64 = v.parse().map_err(|_| {
                    Error::Input(format!(
                        "line {line}, column '{name}': '{v}' is not a number"
                    ))
                })?;
                if x.is_finite() && x > 0.0 {
                    Ok(x)
                } else {
                    Err(Error::Input(format!(
                        "line {line} (data row {}), column '{name}': value {x} is not positive",
                        i + 1
                    )))
                }
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input("CSV has no data rows".into()));
    }
    Ok(Dataset {
        columns,
        rows,
        source: None,
    })
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut d = read_dataset(f)?;
    d.source = Some(path.to_path_buf());
    Ok(d)
}

/// Writes `# <comment>`, the header and the rows.
pub fn write_csv<W: Write>(
    out: W,
    comment: &str,
    header: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Input(format!("write: {e}"));
    let mut out = BufWriter::new(out);
    writeln!(out, "# {comment}").map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Input(format!("write: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgf::DgfKind;

    #[test]
    fn parameter_file_round_trip() {
        let json = r#"{"family":"t","eta":[3],"mu":[5,4],"lambda":[-1,1.5],"sigma":[[0.5,-0.2],[-0.2,0.3]]}"#;
        let pt = parse_params(json).unwrap();
        assert_eq!(pt.family, DgfKind::StudentT);
        assert_eq!(
            parse_params(&serde_json::to_string(&pt).unwrap()).unwrap(),
            pt
        );
        let normal =
            parse_params(r#"{"family":"normal","mu":[1],"lambda":[0],"sigma":[[1]]}"#).unwrap();
        assert!(normal.eta.is_empty());
    }

    #[test]
    fn invalid_parameter_files() {
        let not_pd = r#"{"family":"normal","mu":[1,1],"lambda":[0,0],"sigma":[[1,2],[2,1]]}"#;
        assert!(matches!(
            parse_params(not_pd),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        assert!(parse_params(r#"{"family":"gamma","mu":[1],"lambda":[0],"sigma":[[1]]}"#).is_err());
        assert!(
            parse_params(r#"{"family":"normal","mu":[1,2],"lambda":[0],"sigma":[[1]]}"#).is_err()
        );
        assert!(parse_params(r#"{"family":"t","mu":[1],"lambda":[0],"sigma":[[1]]}"#).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut buf = Vec::new();
        let header = vec!["a".to_string(), "b".to_string()];
        write_csv(
            &mut buf,
            "bce 0.1.0 seed=3",
            &header,
            &[vec![1.5, 2.0], vec![0.25, 1e-3]],
        )
        .unwrap();
        let d = read_dataset(&buf[..]).unwrap();
        assert_eq!(d.columns, header);
        assert_eq!(d.rows, vec![vec![1.5, 2.0], vec![0.25, 1e-3]]);
        let picked = d.select(&["b".to_string()]).unwrap();
        assert_eq!(picked.rows[1], vec![1e-3]);
        assert!(d.select(&["c".to_string()]).is_err());

        let err = read_dataset("x,y\n1,2\n3,0\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("line 3") && err.contains("data row 2"),
            "{err}"
        );
        assert!(read_dataset("x,y\n1,abc\n".as_bytes()).is_err());
        assert!(read_dataset("x,y\n".as_bytes()).is_err());
    }
}
