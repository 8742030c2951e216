//! Toy mixtures, tabular ingestion, splitting and sample dumps.

mod mixture;
mod tabular;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use mixture::{sample_mixture, sample_mixture_labeled, MixtureSpec};
pub use tabular::{
    load_tabular, planted_discrimination, Block, ColumnSpec, ColumnType, RawTable, TabularEncoder, TabularSchema,
};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Shuffled train/test row indices; the train part has `round(n·fraction)`
/// rows.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (n as f64 * fraction).round() as usize;
    let test = idx.split_off(cut);
    Ok((idx, test))
}

pub fn split(x: &Tensor, fraction: f64, seed: u64) -> Result<(Tensor, Tensor)> {
    let (train, test) = split_indices(x.rows(), fraction, seed)?;
    Ok((x.select_rows(&train), x.select_rows(&test)))
}

/// Name of the trailing per-row temperature column in sample dumps.
pub const ALPHA_COLUMN: &str = "alpha";

/// Writes numeric samples with header `names…, alpha`.
pub fn write_samples(path: &Path, names: &[String], x: &Tensor, alpha: &[f64]) -> Result<()> {
    let cells: Vec<Vec<String>> = (0..x.rows()).map(|i| x.row(i).iter().map(f64::to_string).collect()).collect();
    write_table_samples(
        path,
        &RawTable {
            header: names.to_vec(),
            rows: cells,
        },
        alpha,
    )
}

/// Writes decoded rows with the temperature appended as the last column.
pub fn write_table_samples(path: &Path, table: &RawTable, alpha: &[f64]) -> Result<()> {
    if table.rows.len() != alpha.len() {
        return Err(Error::invalid(format!("{} rows for {} temperatures", table.rows.len(), alpha.len())));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = table.header.clone();
    header.push(ALPHA_COLUMN.into());
    w.write_record(&header)?;
    for (row, a) in table.rows.iter().zip(alpha) {
        let mut rec = row.clone();
        rec.push(a.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an all-numeric CSV. A trailing `alpha` column is split off and
/// returned separately.
pub fn read_samples(path: &Path) -> Result<(Vec<String>, Tensor, Option<Vec<f64>>)> {
    let table = RawTable::read_csv(path)?;
    numeric_samples(&table)
}

pub fn numeric_samples(table: &RawTable) -> Result<(Vec<String>, Tensor, Option<Vec<f64>>)> {
    let mut header = table.header.clone();
    let has_alpha = header.last().is_some_and(|h| h == ALPHA_COLUMN);
    if has_alpha {
        header.pop();
    }
    let d = header.len();
    if d == 0 {
        return Err(Error::Data {
            row: 1,
            column: None,
            message: "no sample columns".into(),
        });
    }
    let mut x = Tensor::zeros(table.rows.len(), d);
    let mut alpha = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != table.header.len() {
            return Err(Error::Data {
                row: i + 2,
                column: None,
                message: format!("{} cells for {} header fields", row.len(), table.header.len()),
            });
        }
        for (j, cell) in row.iter().enumerate() {
            let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Data {
                row: i + 2,
                column: Some(table.header[j].clone()),
                message: format!("{cell:?} is not a finite number"),
            })?;
            if j < d {
                x.set(i, j, v);
            } else {
                alpha.push(v);
            }
        }
    }
    Ok((header, x, has_alpha.then_some(alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ninety_ten_split() {
        let x = Tensor::from_fn(100, 1, |i, _| i as f64);
        let (tr, te) = split(&x, 0.9, 3).unwrap();
        assert_eq!((tr.rows(), te.rows()), (90, 10));
        let mut all: Vec<f64> = tr.as_slice().iter().chain(te.as_slice()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, x.as_slice());
        assert_eq!(split(&x, 0.9, 3).unwrap(), (tr, te));
        assert!(split(&x, 1.0, 3).is_err());
    }

    #[test]
    fn sample_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let x = Tensor::from_rows(&[[0.1, -2.0], [3.5, 1e-17]]);
        write_samples(&path, &["x0".into(), "x1".into()], &x, &[1.0, 0.25]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x0,x1,alpha\n"));
        let (names, y, alpha) = read_samples(&path).unwrap();
        assert_eq!(names, vec!["x0", "x1"]);
        assert_eq!(y, x);
        assert_eq!(alpha, Some(vec![1.0, 0.25]));
    }

    #[test]
    fn non_numeric_sample_cell_is_located() {
        let t = RawTable::from_reader("a,b\n1,2\n3,x\n".as_bytes()).unwrap();
        match numeric_samples(&t) {
            Err(Error::Data { row: 3, column: Some(c), .. }) => assert_eq!(c, "b"),
            other => panic!("{other:?}"),
        }
    }
}
