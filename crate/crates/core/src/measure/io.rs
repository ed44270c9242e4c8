//! CSV interchange for measures.
//!
//! * `csv_points`: header `x,y,mass`, one point per row.
//! * `csv_grid`: a `#grid rows cols x0 y0 dx dy` line followed by `rows`
//!   lines of `cols` comma-separated node masses.
//!
//! Other lines starting with `#` are comments (run metadata).

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{DiscreteMeasure, GridImage, GridSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureFormat {
    CsvPoints,
    CsvGrid,
}

impl FromStr for MeasureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv_points" | "points" => Ok(Self::CsvPoints),
            "csv_grid" | "grid" => Ok(Self::CsvGrid),
            other => Err(Error::InvalidArgument(format!(
                "unknown measure format '{other}'"
            ))),
        }
    }
}

impl MeasureFormat {
    /// Grid files are recognized by their `#grid` header line.
    pub fn detect(text: &str) -> Self {
        if text.lines().any(|l| l.trim_start().starts_with("#grid")) {
            Self::CsvGrid
        } else {
            Self::CsvPoints
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn parse_f64(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: '{field}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value '{field}'"),
        });
    }
    Ok(v)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

/// Parses a `csv_points` document. Zero-mass rows are dropped.
pub fn parse_points_csv(text: &str) -> Result<DiscreteMeasure> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "mass"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header 'x,y,mass', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut coords = Vec::new();
    let mut masses = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let x = parse_f64(&record[0], line)?;
        let y = parse_f64(&record[1], line)?;
        let m = parse_f64(&record[2], line)?;
        if m < 0.0 {
            return Err(Error::NegativeMass { index, mass: m });
        }
        if m > 0.0 {
            coords.extend_from_slice(&[x, y]);
            masses.push(m);
        }
    }
    if masses.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    DiscreteMeasure::new(2, coords, masses)
}

/// Parses a `csv_grid` document into a dense image (zeros kept).
pub fn parse_grid_csv(text: &str) -> Result<GridImage> {
    let mut offset = 0;
    let mut header = None;
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("#grid") {
            header = Some((lineno + 1, rest.to_string()));
            break;
        }
        if !(t.is_empty() || t.starts_with('#')) {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "data before the '#grid' header".into(),
            });
        }
    }
    let (header_line, rest) = header.ok_or(Error::Parse {
        line: 1,
        msg: "missing '#grid rows cols x0 y0 dx dy' header".into(),
    })?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(Error::Parse {
            line: header_line,
            msg: format!("grid header needs 6 fields, got {}", fields.len()),
        });
    }
    let dims: Vec<usize> = fields[..2]
        .iter()
        .map(|f| {
            f.parse().map_err(|_| Error::Parse {
                line: header_line,
                msg: format!("bad grid size '{f}'"),
            })
        })
        .collect::<Result<_>>()?;
    let geo: Vec<f64> = fields[2..]
        .iter()
        .map(|f| parse_f64(f, header_line))
        .collect::<Result<_>>()?;
    let grid = GridSpec::new(dims[0], dims[1], [geo[0], geo[1]], [geo[2], geo[3]])?;
    dims[0].checked_mul(dims[1]).ok_or(Error::Parse {
        line: header_line,
        msg: "grid too large".into(),
    })?;

    let body = &text[offset..];
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(body.as_bytes());
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = header_line + record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if rows == grid.rows {
            return Err(Error::Parse {
                line,
                msg: format!("more than {} data rows", grid.rows),
            });
        }
        if record.len() != grid.cols {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} columns, got {}", grid.cols, record.len()),
            });
        }
        for field in record.iter() {
            let v = parse_f64(field, line)?;
            if v < 0.0 {
                return Err(Error::NegativeMass {
                    index: values.len(),
                    mass: v,
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != grid.rows {
        return Err(Error::Parse {
            line: header_line,
            msg: format!("expected {} data rows, got {rows}", grid.rows),
        });
    }
    GridImage::new(grid, values)
}

/// Parses either format; the result has no zero-mass points.
pub fn parse_measure(text: &str, format: MeasureFormat) -> Result<DiscreteMeasure> {
    match format {
        MeasureFormat::CsvPoints => parse_points_csv(text),
        MeasureFormat::CsvGrid => {
            let mu = parse_grid_csv(text)?.to_measure();
            if mu.is_empty() {
                return Err(Error::EmptyMeasure);
            }
            Ok(mu)
        }
    }
}

pub fn load_measure(path: &Path, format: MeasureFormat) -> Result<DiscreteMeasure> {
    parse_measure(&read_text(path)?, format)
}

pub fn load_grid(path: &Path) -> Result<GridImage> {
    parse_grid_csv(&read_text(path)?)
}

fn write_comments(out: &mut String, comments: &[String]) {
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
}

/// Serializes planar points as `csv_points`; values use shortest round-trip
/// formatting so re-parsing is exact.
pub fn points_csv_string(mu: &DiscreteMeasure, comments: &[String]) -> Result<String> {
    if mu.dim() != 2 {
        return Err(Error::DimensionMismatch(
            "csv_points holds planar points only".into(),
        ));
    }
    let mut out = String::new();
    write_comments(&mut out, comments);
    out.push_str("x,y,mass\n");
    for (p, m) in mu.points().zip(mu.masses()) {
        let _ = writeln!(out, "{},{},{}", p[0], p[1], m);
    }
    Ok(out)
}

pub fn grid_csv_string(img: &GridImage, comments: &[String]) -> String {
    let g = &img.grid;
    let mut out = String::new();
    write_comments(&mut out, comments);
    let _ = writeln!(
        out,
        "#grid {} {} {} {} {} {}",
        g.rows, g.cols, g.origin[0], g.origin[1], g.spacing[0], g.spacing[1]
    );
    for row in img.values.chunks_exact(g.cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_row() {
        let mu = parse_points_csv("x,y,mass\n0,0,1.0\n").unwrap();
        assert_eq!(mu.len(), 1);
        assert_eq!(mu.point(0), &[0.0, 0.0]);
        assert_eq!(mu.masses(), &[1.0]);
    }

    #[test]
    fn points_drop_zeros_and_reject_negatives() {
        let mu = parse_points_csv("# meta\nx,y,mass\n0,0,0\n1,2,3\n").unwrap();
        assert_eq!(mu.len(), 1);
        assert!(matches!(
            parse_points_csv("x,y,mass\n0,0,-1\n"),
            Err(Error::NegativeMass { index: 0, .. })
        ));
        assert!(matches!(
            parse_points_csv("x,y,mass\n0,0,0\n"),
            Err(Error::EmptyMeasure)
        ));
        assert!(matches!(
            parse_points_csv("a,b,c\n0,0,1\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_points_csv("x,y,mass\n0,zero,1\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_points_csv("x,y,mass\n0,1\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn all_zero_grid_is_empty() {
        let text = "#grid 2 2 0 0 1 1\n0,0\n0,0\n";
        assert!(matches!(
            parse_measure(text, MeasureFormat::CsvGrid),
            Err(Error::EmptyMeasure)
        ));
    }

    #[test]
    fn full_grid_drops_zero_pixels() {
        let img = crate::measure::ellipses_image(0.0, 0.0, 64).unwrap();
        let text = grid_csv_string(&img, &["generated".to_string()]);
        assert_eq!(MeasureFormat::detect(&text), MeasureFormat::CsvGrid);
        let back = parse_grid_csv(&text).unwrap();
        assert_eq!(back, img);
        let mu = parse_measure(&text, MeasureFormat::CsvGrid).unwrap();
        assert!(mu.len() <= 4096 && mu.len() > 100);
    }

    #[test]
    fn grid_shape_errors() {
        assert!(parse_grid_csv("1,2\n").is_err());
        assert!(parse_grid_csv("#grid 2 2 0 0 1 1\n1,2\n").is_err());
        assert!(parse_grid_csv("#grid 1 2 0 0 1 1\n1,2,3\n").is_err());
        assert!(parse_grid_csv("#grid 1 2 0 0 0 1\n1,2\n").is_err());
        assert!(parse_grid_csv("#grid 1 2 0 0 1 1\n1,-2\n").is_err());
        assert!(
            parse_grid_csv("#grid 18446744073709551615 18446744073709551615 0 0 1 1\n").is_err()
        );
    }

    #[test]
    fn points_roundtrip_exactly() {
        let mu = DiscreteMeasure::from_points_2d(&[[0.1, 1.0 / 3.0], [2.5e-7, -4.0]], &[0.3, 1e-9])
            .unwrap();
        let text = points_csv_string(&mu, &[]).unwrap();
        assert_eq!(parse_points_csv(&text).unwrap().coords(), mu.coords());
    }
}
