//! CSV import and export of matrices and collected data.
//!
//! A matrix file starts with a header row `rows=R,cols=C` followed by `R` rows of
//! `C` comma-separated values. Values are written in shortest round-trip form, so
//! a write/read cycle is lossless and identical inputs give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::SubsystemData;
use crate::linalg::Matrix;

pub fn format_matrix(m: &Matrix) -> String {
    let mut out = format!("rows={},cols={}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let (r, c) = line.trim().split_once(',')?;
    let rows = r.trim().strip_prefix("rows=")?.parse().ok()?;
    let cols = c.trim().strip_prefix("cols=")?.parse().ok()?;
    Some((rows, cols))
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let (rows, cols) = parse_header(header).ok_or_else(|| err(format!("bad header {header:?}")))?;
    let mut data = Vec::with_capacity(rows * cols);
    for (r, line) in lines.enumerate() {
        if r >= rows {
            return Err(err(format!("more than {rows} data rows")));
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(format!("row {}: bad number {field:?}", r + 1)))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(err(format!(
                "row {} has {} values, expected {cols}",
                r + 1,
                data.len() - before
            )));
        }
    }
    if data.len() != rows * cols {
        return Err(err(format!(
            "found {} rows, expected {rows}",
            data.len() / cols.max(1)
        )));
    }
    Matrix::new(rows, cols, data).map_err(|e| err(e.to_string()))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(format_matrix(m).as_bytes())?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&fs::read_to_string(path)?, path)
}

fn data_file(dir: &Path, name: &str, i: usize) -> PathBuf {
    dir.join(format!("{name}_{}.csv", i + 1))
}

const DATA_NAMES: [&str; 4] = ["U", "Phi", "X0", "X1"];

/// Writes `U_i.csv`, `Phi_i.csv`, `X0_i.csv`, `X1_i.csv` for every subsystem (1-based).
pub fn save_data(dir: &Path, data: &[SubsystemData]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, d) in data.iter().enumerate() {
        for (name, m) in DATA_NAMES.iter().zip([&d.u, &d.phi, &d.x0, &d.x1]) {
            write_matrix(&data_file(dir, name, i), m)?;
        }
    }
    Ok(())
}

/// Reads subsystems `1, 2, ...` until `U_k.csv` is missing.
pub fn load_data(dir: &Path) -> Result<Vec<SubsystemData>> {
    let mut out = Vec::new();
    while data_file(dir, "U", out.len()).exists() {
        let i = out.len();
        let m: Vec<Matrix> = DATA_NAMES
            .iter()
            .map(|name| read_matrix(&data_file(dir, name, i)))
            .collect::<Result<_>>()?;
        let [u, phi, x0, x1]: [Matrix; 4] = m.try_into().expect("four matrices");
        out.push(SubsystemData::new(u, phi, x0, x1)?);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: dir.to_path_buf(),
            message: "no U_1.csv found".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let m = Matrix::from_rows(&[[0.1, -2.5e-17, 1e300], [f64::MIN_POSITIVE, 50.0, -0.0]]);
        let text = format_matrix(&m);
        assert!(text.starts_with("rows=2,cols=3\n"));
        let back = parse_matrix(&text, Path::new("m.csv")).unwrap();
        assert_eq!(back, m);
        assert_eq!(format_matrix(&back), text);
    }

    #[test]
    fn empty_dimensions() {
        let m = Matrix::zeros(0, 40);
        let back = parse_matrix(&format_matrix(&m), Path::new("e.csv")).unwrap();
        assert_eq!(back.shape(), (0, 40));
    }

    #[test]
    fn malformed_input_is_rejected() {
        let p = Path::new("bad.csv");
        for text in [
            "",
            "2,2\n1,2\n3,4\n",
            "rows=2,cols=2\n1,2\n",
            "rows=1,cols=2\n1,2,3\n",
            "rows=1,cols=2\n1,x\n",
            "rows=1,cols=2\n1,2\n3,4\n",
            "rows=1,cols=1\nNaN\n",
        ] {
            assert!(
                matches!(parse_matrix(text, p), Err(Error::Parse { .. })),
                "{text:?}"
            );
        }
    }
}
