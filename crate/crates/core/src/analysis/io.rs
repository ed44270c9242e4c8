//! CSV formats for embeddings, PCA results and dataset manifests.
//!
//! An embedding file carries one `#embedding key=value ...` line, then one
//! row per sample: the flattened tangent vector followed by the label
//! (empty when unlabelled).

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{EmbeddingMatrix, Metric, PcaResult};
use crate::error::{Error, Result};
use crate::measure::io::{csv_error, parse_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingHeader {
    pub metric: Metric,
    pub kappa: f64,
    pub dim: usize,
    /// Path of the reference measure, relative to the embedding file.
    pub reference: Option<String>,
}

/// Parsed embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub header: EmbeddingHeader,
    pub rows: DMatrix<f64>,
    pub labels: Option<Vec<i64>>,
}

fn write_comments(out: &mut String, comments: &[String]) {
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
}

pub fn embedding_csv_string(
    emb: &EmbeddingMatrix,
    reference: Option<&str>,
    comments: &[String],
) -> String {
    let mut out = String::new();
    write_comments(&mut out, comments);
    let _ = write!(
        out,
        "#embedding metric={} kappa={} dim={}",
        emb.metric,
        emb.kappa,
        emb.dim()
    );
    if let Some(r) = reference {
        let _ = write!(out, " reference={r}");
    }
    out.push('\n');
    for i in 0..emb.n_samples() {
        for x in emb.rows.row(i).iter() {
            let _ = write!(out, "{x},");
        }
        if let Some(l) = &emb.labels {
            let _ = write!(out, "{}", l[i]);
        }
        out.push('\n');
    }
    out
}

fn parse_header(line: &str, lineno: usize) -> Result<EmbeddingHeader> {
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let (mut metric, mut kappa, mut dim, mut reference) = (None, None, None, None);
    for field in line.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got '{field}'")))?;
        match k {
            "metric" => metric = Some(v.parse::<Metric>().map_err(|e| err(e.to_string()))?),
            "kappa" => {
                let x = parse_f64(v, lineno)?;
                if x <= 0.0 {
                    return Err(err(format!("kappa must be positive, got {x}")));
                }
                kappa = Some(x)
            }
            "dim" => {
                dim = Some(
                    v.parse::<usize>()
                        .map_err(|_| err(format!("bad dim '{v}'")))?,
                )
            }
            "reference" => reference = Some(v.to_string()),
            _ => return Err(err(format!("unknown embedding key '{k}'"))),
        }
    }
    Ok(EmbeddingHeader {
        metric: metric.ok_or_else(|| err("missing metric".into()))?,
        kappa: kappa.ok_or_else(|| err("missing kappa".into()))?,
        dim: dim.ok_or_else(|| err("missing dim".into()))?,
        reference,
    })
}

pub fn parse_embedding_csv(text: &str) -> Result<EmbeddingTable> {
    let mut header = None;
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("#embedding") {
            header = Some(parse_header(rest, n + 1)?);
            break;
        }
        if !(t.is_empty() || t.starts_with('#')) {
            return Err(Error::Parse {
                line: n + 1,
                msg: "data before the '#embedding' line".into(),
            });
        }
    }
    let header = header.ok_or(Error::Parse {
        line: 1,
        msg: "missing '#embedding' line".into(),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(&text.as_bytes()[offset..]);
    let mut values = Vec::new();
    let mut labels: Vec<Option<i64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.dim + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", header.dim + 1, record.len()),
            });
        }
        for f in record.iter().take(header.dim) {
            values.push(parse_f64(f, line)?);
        }
        let label = &record[header.dim];
        labels.push(if label.is_empty() {
            None
        } else {
            Some(label.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad label '{label}'"),
            })?)
        });
    }
    let n = labels.len();
    let labels = if labels.iter().all(Option::is_some) && n > 0 {
        Some(labels.into_iter().flatten().collect())
    } else if labels.iter().all(Option::is_none) {
        None
    } else {
        return Err(Error::Parse {
            line: 0,
            msg: "labels given for some rows only".into(),
        });
    };
    Ok(EmbeddingTable {
        rows: DMatrix::from_row_slice(n, header.dim, &values),
        header,
        labels,
    })
}

/// Eigenvalue table: `mode,eigenvalue,explained_variance_ratio,cumulative`.
pub fn pca_eigen_csv_string(p: &PcaResult, comments: &[String]) -> String {
    let mut out = String::new();
    write_comments(&mut out, comments);
    out.push_str("mode,eigenvalue,explained_variance_ratio,cumulative\n");
    let mut cum = 0.0;
    for (k, (l, r)) in p
        .eigenvalues
        .iter()
        .zip(&p.explained_variance_ratio)
        .enumerate()
    {
        cum += r;
        let _ = writeln!(out, "{},{l},{r},{cum}", k + 1);
    }
    out
}

/// Mean and modes, one per line, each prefixed by its name.
pub fn pca_modes_csv_string(p: &PcaResult, comments: &[String]) -> String {
    let mut out = String::new();
    write_comments(&mut out, comments);
    let line = |out: &mut String, name: &str, v: &mut dyn Iterator<Item = f64>| {
        out.push_str(name);
        for x in v {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    };
    line(&mut out, "mean", &mut p.mean.iter().copied());
    for k in 0..p.n_modes() {
        line(
            &mut out,
            &format!("mode{}", k + 1),
            &mut p.modes.row(k).iter().copied(),
        );
    }
    out
}

/// One dataset sample: a measure file and its generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub p1: f64,
    pub p2: f64,
    pub label: Option<i64>,
}

pub fn manifest_csv_string(entries: &[ManifestEntry], comments: &[String]) -> String {
    let mut out = String::new();
    write_comments(&mut out, comments);
    out.push_str("file,p1,p2,label\n");
    for e in entries {
        let label = e.label.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{label}", e.file, e.p1, e.p2);
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["file", "p1", "p2", "label"] {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header 'file,p1,p2,label'".into(),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields, got {}", record.len()),
            });
        }
        if record[0].is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty file name".into(),
            });
        }
        let label = match &record[3] {
            "" => None,
            l => Some(l.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad label '{l}'"),
            })?),
        };
        out.push(ManifestEntry {
            file: record[0].to_string(),
            p1: parse_f64(&record[1], line)?,
            p2: parse_f64(&record[2], line)?,
            label,
        });
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "manifest lists no samples".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DiscreteMeasure;

    fn emb(labels: Option<Vec<i64>>) -> EmbeddingMatrix {
        EmbeddingMatrix {
            rows: DMatrix::from_row_slice(2, 3, &[0.1, -2.5, 1.0 / 3.0, 0.0, 1e-300, 7.0]),
            labels,
            reference: DiscreteMeasure::empty(2),
            metric: Metric::W2,
            kappa: 0.25,
        }
    }

    #[test]
    fn embedding_round_trip() {
        for labels in [None, Some(vec![0, 1])] {
            let e = emb(labels.clone());
            let text = embedding_csv_string(&e, Some("ref.csv"), &["hklin embed".into()]);
            let t = parse_embedding_csv(&text).unwrap();
            assert_eq!(t.rows, e.rows);
            assert_eq!(t.labels, labels);
            assert_eq!(
                t.header,
                EmbeddingHeader {
                    metric: Metric::W2,
                    kappa: 0.25,
                    dim: 3,
                    reference: Some("ref.csv".into())
                }
            );
        }
    }

    #[test]
    fn embedding_errors() {
        for text in [
            "1,2,\n",
            "#embedding metric=hk kappa=1\n1,\n",
            "#embedding metric=hk kappa=1 dim=2\n1,\n",
            "#embedding metric=hk kappa=-1 dim=1\n1,\n",
            "#embedding metric=xx kappa=1 dim=1\n1,\n",
            "#embedding metric=hk kappa=1 dim=1\n1,0\n2,\n",
            "#embedding metric=hk kappa=1 dim=1\nfoo,0\n",
        ] {
            assert!(parse_embedding_csv(text).is_err(), "{text}");
        }
    }

    #[test]
    fn manifest_round_trip() {
        let entries = vec![
            ManifestEntry {
                file: "a.csv".into(),
                p1: -1.0,
                p2: 0.25,
                label: Some(1),
            },
            ManifestEntry {
                file: "b.csv".into(),
                p1: 0.5,
                p2: -0.75,
                label: None,
            },
        ];
        assert_eq!(
            parse_manifest(&manifest_csv_string(&entries, &["gen".into()])).unwrap(),
            entries
        );
        assert!(parse_manifest("file,p1,p2,label\n").is_err());
        assert!(parse_manifest("file,p1,p2\na,1,2\n").is_err());
        assert!(parse_manifest("file,p1,p2,label\na,x,2,1\n").is_err());
    }
}
