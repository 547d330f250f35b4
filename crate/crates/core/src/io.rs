//! File formats: dataset and basis CSVs, sweep output, and the key=value
//! config-file parser.
//!
//! PCA data rows are `user_id,x_0,...,x_{d-1}`; linear data rows are
//! `user_id,y,x_0,...,x_{d-1}`. Rows for a user need not be contiguous.
//! Basis files are d rows by k columns of 17-significant-digit decimals.
//! Every emitted file ends with a trailing newline and uses '.' as the
//! decimal separator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::harness::SweepRow;
use crate::linalg::Basis;
use crate::linmodel::{LinearBlock, LinearDataset};
use crate::pca::PcaDataset;

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number '{}'", token.trim()),
    })
}

fn split_header(header: &str) -> Vec<&str> {
    header.trim().split(',').map(|s| s.trim()).collect()
}

fn check_xs_header(cols: &[&str], offset: usize, line: usize) -> Result<usize> {
    let d = cols.len() - offset;
    if d == 0 {
        return Err(Error::Parse {
            line,
            msg: "no coordinate columns".into(),
        });
    }
    for (i, col) in cols[offset..].iter().enumerate() {
        let expected = format!("x_{i}");
        if *col != expected {
            return Err(Error::Parse {
                line,
                msg: format!("expected column '{expected}', found '{col}'"),
            });
        }
    }
    Ok(d)
}

/// Parse PCA data CSV (`user_id,x_0,...,x_{d-1}`) from a string.
pub fn parse_pca_csv(text: &str) -> Result<PcaDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols = split_header(header);
    if cols.first() != Some(&"user_id") {
        return Err(Error::Parse {
            line: 1,
            msg: "first column must be 'user_id'".into(),
        });
    }
    let d = check_xs_header(&cols, 1, 1)?;

    // user blocks keyed by id; rows need not be contiguous
    let mut blocks: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", d + 1, fields.len()),
            });
        }
        let user: u64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid user_id '{}'", fields[0].trim()),
        })?;
        let sample = fields[1..]
            .iter()
            .map(|t| parse_f64(t, line))
            .collect::<Result<Vec<f64>>>()?;
        blocks.entry(user).or_default().push(sample);
    }
    if blocks.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let users: Vec<DMatrix<f64>> = blocks
        .values()
        .map(|samples| DMatrix::from_fn(d, samples.len(), |i, j| samples[j][i]))
        .collect();
    PcaDataset::new(users)
}

/// Parse linear data CSV (`user_id,y,x_0,...,x_{d-1}`) from a string.
pub fn parse_linear_csv(text: &str) -> Result<LinearDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols = split_header(header);
    if cols.first() != Some(&"user_id") || cols.get(1) != Some(&"y") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with 'user_id,y'".into(),
        });
    }
    let d = check_xs_header(&cols, 2, 1)?;

    let mut blocks: BTreeMap<u64, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", d + 2, fields.len()),
            });
        }
        let user: u64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid user_id '{}'", fields[0].trim()),
        })?;
        let y = parse_f64(fields[1], line)?;
        let x = fields[2..]
            .iter()
            .map(|t| parse_f64(t, line))
            .collect::<Result<Vec<f64>>>()?;
        let entry = blocks.entry(user).or_default();
        entry.0.push(x);
        entry.1.push(y);
    }
    if blocks.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let users: Vec<LinearBlock> = blocks
        .values()
        .map(|(xs, ys)| LinearBlock {
            xs: DMatrix::from_fn(d, xs.len(), |i, j| xs[j][i]),
            ys: nalgebra::DVector::from_vec(ys.clone()),
        })
        .collect();
    LinearDataset::new(users)
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialize a PCA dataset to its CSV format.
pub fn pca_csv(dataset: &PcaDataset) -> String {
    let d = dataset.d();
    let mut out = String::from("user_id");
    for i in 0..d {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    for u in 0..dataset.n_users() {
        let block = dataset.user(u);
        for j in 0..block.ncols() {
            let _ = write!(out, "{u}");
            for i in 0..d {
                let _ = write!(out, ",{}", fmt17(block[(i, j)]));
            }
            out.push('\n');
        }
    }
    out
}

/// Serialize a linear dataset to its CSV format.
pub fn linear_csv(dataset: &LinearDataset) -> String {
    let d = dataset.d();
    let mut out = String::from("user_id,y");
    for i in 0..d {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    for u in 0..dataset.n_users() {
        let block = dataset.user(u);
        for j in 0..block.m() {
            let _ = write!(out, "{u},{}", fmt17(block.ys[j]));
            for i in 0..d {
                let _ = write!(out, ",{}", fmt17(block.xs[(i, j)]));
            }
            out.push('\n');
        }
    }
    out
}

/// Serialize a basis: d rows, k comma-separated columns, no header.
pub fn basis_csv(basis: &Basis) -> String {
    let mut out = String::new();
    let m = basis.matrix();
    for i in 0..basis.d() {
        let row: Vec<String> = (0..basis.k()).map(|j| fmt17(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parse a basis file written by [`basis_csv`].
pub fn parse_basis_csv(text: &str) -> Result<Basis> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row = raw
            .split(',')
            .map(|t| parse_f64(t, line))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty basis file".into(),
        });
    }
    let d = rows.len();
    let k = rows[0].len();
    Basis::new(DMatrix::from_fn(d, k, |i, j| rows[i][j]))
}

/// Sweep output CSV. When `zero_elapsed` is set the timing column is
/// written as 0 so outputs are byte-identical across runs and worker
/// counts.
pub fn sweep_csv(rows: &[SweepRow], zero_elapsed: bool) -> String {
    let mut out = String::from(
        "setting,d,k,n,m,sigma,eta_summary,weights,delta,trials,median_sin,q25,q75,upper_weighted,lower,failed,elapsed_ms_total\n",
    );
    for r in rows {
        let elapsed = if zero_elapsed { 0.0 } else { r.elapsed_ms_total };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            r.setting,
            r.d,
            r.k,
            r.n,
            r.m,
            r.sigma,
            r.eta_summary,
            r.weights,
            r.delta,
            r.trials,
            fmt17(r.median_sin),
            fmt17(r.q25),
            fmt17(r.q75),
            fmt17(r.upper_weighted),
            fmt17(r.lower),
            r.failed,
            elapsed,
        );
    }
    out
}

/// Parse a `key = value` config file: one pair per line, '#' comments.
/// `allowed` is the closed key set; unknown keys are rejected with their
/// line number.
pub fn parse_config_file(text: &str, allowed: &[&str]) -> Result<Vec<(String, String, usize)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(Error::Parse {
            line,
            msg: format!("expected 'key = value', found '{trimmed}'"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Parse {
                line,
                msg: format!("unknown key '{key}'"),
            });
        }
        pairs.push((key, value, line));
    }
    Ok(pairs)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn pca_round_trip() {
        let users = vec![
            DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DMatrix::from_column_slice(2, 3, &[0.5, -1.0, 0.25, 8.0, 1e-17, 2.0]),
        ];
        let ds = PcaDataset::new(users).unwrap();
        let text = pca_csv(&ds);
        assert!(text.ends_with('\n'));
        let parsed = parse_pca_csv(&text).unwrap();
        assert_eq!(parsed.n_users(), 2);
        for i in 0..2 {
            assert_eq!(parsed.user(i), ds.user(i));
        }
    }

    #[test]
    fn pca_rows_need_not_be_contiguous() {
        let text = "user_id,x_0,x_1\n0,1,0\n1,0,1\n0,1,0.5\n1,0,2\n";
        let ds = parse_pca_csv(text).unwrap();
        assert_eq!(ds.n_users(), 2);
        assert_eq!(ds.user(0).ncols(), 2);
    }

    #[test]
    fn pca_parse_errors_carry_line_numbers() {
        let text = "user_id,x_0\n0,1.0\n0,oops\n";
        match parse_pca_csv(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "user_id,x_9\n";
        assert!(parse_pca_csv(text).is_err());
    }

    #[test]
    fn linear_round_trip() {
        let users = vec![LinearBlock {
            xs: DMatrix::from_column_slice(2, 2, &[1.0, -1.0, 0.5, 2.0]),
            ys: nalgebra::DVector::from_vec(vec![3.0, -0.125]),
        }];
        let ds = LinearDataset::new(users).unwrap();
        let parsed = parse_linear_csv(&linear_csv(&ds)).unwrap();
        assert_eq!(parsed.user(0).xs, ds.user(0).xs);
        assert_eq!(parsed.user(0).ys, ds.user(0).ys);
    }

    #[test]
    fn basis_round_trip_is_exact() {
        let mut rng = Stream::for_path(2, &[0]);
        let b = crate::linalg::haar_basis(7, 3, &mut rng).unwrap();
        let text = basis_csv(&b);
        assert!(text.ends_with('\n'));
        let parsed = parse_basis_csv(&text).unwrap();
        assert_eq!(parsed.matrix(), b.matrix());
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let text = "# experiment\nd = 20\nk = 2  # subspace\nbogus = 1\n";
        match parse_config_file(text, &["d", "k"]) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("bogus"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let pairs = parse_config_file("d = 20\nk = 2\n", &["d", "k"]).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0], ("d".into(), "20".into(), 1));
    }
}
