//! Mixed continuous/categorical tables: schema, min-max and one-hot encoding,
//! and the inverse map back to cell values.
//!
//! The encoded layout puts every continuous column first, in schema order,
//! followed by one one-hot block per categorical column, again in schema
//! order. That is the layout a tabular generator head emits.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nets::TabularHeadSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Continuous,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnType,
    /// Categorical levels; one-hot positions follow this order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// Level that absorbs any value not listed in `levels`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<String>,
}

impl ColumnSpec {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnType::Continuous,
            levels: Vec::new(),
            other: None,
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnType::Categorical,
            levels: levels.iter().map(|s| s.to_string()).collect(),
            other: None,
        }
    }

    fn with_other(mut self, other: &str) -> Self {
        self.other = Some(other.into());
        self
    }

    fn level_index(&self, value: &str) -> Option<usize> {
        self.levels
            .iter()
            .position(|l| l == value)
            .or_else(|| self.other.as_ref().and_then(|o| self.levels.iter().position(|l| l == o)))
    }
}

/// Binary columns (`sensitive`, `label`) must be categorical with exactly two
/// levels; the first level reads as 0/false and the second as 1/true.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSchema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TabularSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Config("schema has no columns".into()));
        }
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|d| d.name == c.name) {
                return Err(Error::Config(format!("duplicate column {:?}", c.name)));
            }
            match c.kind {
                ColumnType::Continuous if !c.levels.is_empty() || c.other.is_some() => {
                    return Err(Error::Config(format!("continuous column {:?} cannot list levels", c.name)));
                }
                ColumnType::Categorical => {
                    if c.levels.is_empty() {
                        return Err(Error::Config(format!("categorical column {:?} has no levels", c.name)));
                    }
                    for (j, l) in c.levels.iter().enumerate() {
                        if c.levels[..j].contains(l) {
                            return Err(Error::Config(format!("column {:?} repeats level {l:?}", c.name)));
                        }
                    }
                    if let Some(o) = &c.other {
                        if !c.levels.contains(o) {
                            return Err(Error::Config(format!("column {:?}: catch-all {o:?} is not a level", c.name)));
                        }
                    }
                }
                _ => {}
            }
        }
        for (role, name) in [("sensitive", &self.sensitive), ("label", &self.label)] {
            let Some(name) = name else { continue };
            match self.column(name) {
                None => return Err(Error::Config(format!("{role} column {name:?} is not in the schema"))),
                Some(c) if c.kind != ColumnType::Categorical || c.levels.len() != 2 => {
                    return Err(Error::Config(format!("{role} column {name:?} must be categorical with two levels")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Shipped schemas for the public Adult, Law School and Credit Card
    /// Default tables, keyed by `adult`, `law` and `credit`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "adult" => Some(adult_schema()),
            "law" => Some(law_schema()),
            "credit" => Some(credit_schema()),
            "planted" => Some(planted_schema()),
            _ => None,
        }
    }
}

fn adult_schema() -> TabularSchema {
    use ColumnSpec as C;
    TabularSchema {
        columns: vec![
            C::continuous("age"),
            C::categorical(
                "workclass",
                &["Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov", "Local-gov", "State-gov", "Without-pay", "Never-worked", "?"],
            ),
            C::continuous("education-num"),
            C::categorical(
                "marital-status",
                &["Married-civ-spouse", "Divorced", "Never-married", "Separated", "Widowed", "Married-spouse-absent", "Married-AF-spouse"],
            ),
            C::categorical(
                "occupation",
                &[
                    "Tech-support", "Craft-repair", "Other-service", "Sales", "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
                    "Machine-op-inspct", "Adm-clerical", "Farming-fishing", "Transport-moving", "Priv-house-serv", "Protective-serv",
                    "Armed-Forces", "?",
                ],
            ),
            C::categorical("relationship", &["Wife", "Own-child", "Husband", "Not-in-family", "Other-relative", "Unmarried"]),
            C::categorical("race", &["Non-white", "White"]).with_other("Non-white"),
            C::categorical("sex", &["Female", "Male"]),
            C::continuous("capital-gain"),
            C::continuous("capital-loss"),
            C::continuous("hours-per-week"),
            C::categorical(
                "native-country",
                &[
                    "United-States", "Cambodia", "England", "Puerto-Rico", "Canada", "Germany", "Outlying-US(Guam-USVI-etc)", "India",
                    "Japan", "Greece", "South", "China", "Cuba", "Iran", "Honduras", "Philippines", "Italy", "Poland", "Jamaica",
                    "Vietnam", "Mexico", "Portugal", "Ireland", "France", "Dominican-Republic", "Laos", "Ecuador", "Taiwan", "Haiti",
                    "Columbia", "Hungary", "Guatemala", "Nicaragua", "Scotland", "Thailand", "Yugoslavia", "El-Salvador",
                    "Trinadad&Tobago", "Peru", "Hong", "Holand-Netherlands", "?",
                ],
            ),
            C::categorical("income", &["<=50K", ">50K"]),
        ],
        sensitive: Some("race".into()),
        label: Some("income".into()),
    }
}

fn law_schema() -> TabularSchema {
    use ColumnSpec as C;
    TabularSchema {
        columns: vec![
            C::continuous("LSAT"),
            C::continuous("GPA"),
            C::categorical("Gender", &["0", "1"]),
            C::categorical("resident", &["0", "1"]),
            C::categorical("White", &["0", "1"]),
            C::categorical("admit", &["0", "1"]),
        ],
        sensitive: Some("White".into()),
        label: Some("admit".into()),
    }
}

fn credit_schema() -> TabularSchema {
    use ColumnSpec as C;
    let pay_levels = ["-2", "-1", "0", "1", "2", "3", "4", "5", "6", "7", "8"];
    let mut columns = vec![
        C::continuous("LIMIT_BAL"),
        C::categorical("SEX", &["1", "2"]),
        C::categorical("EDUCATION", &["0", "1", "2", "3", "4", "5", "6"]),
        C::categorical("MARRIAGE", &["0", "1", "2", "3"]),
        C::continuous("AGE"),
    ];
    for p in ["PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6"] {
        columns.push(C::categorical(p, &pay_levels));
    }
    for k in 1..=6 {
        columns.push(C::continuous(&format!("BILL_AMT{k}")));
    }
    for k in 1..=6 {
        columns.push(C::continuous(&format!("PAY_AMT{k}")));
    }
    columns.push(C::categorical("default payment next month", &["0", "1"]));
    TabularSchema {
        columns,
        sensitive: Some("SEX".into()),
        label: Some("default payment next month".into()),
    }
}

fn planted_schema() -> TabularSchema {
    use ColumnSpec as C;
    TabularSchema {
        columns: vec![
            C::continuous("c1"),
            C::continuous("c2"),
            C::categorical("a", &["0", "1"]),
            C::categorical("y", &["0", "1"]),
        ],
        sensitive: Some("a".into()),
        label: Some("y".into()),
    }
}

/// A synthetic table whose label depends on the sensitive attribute
/// directly and, through a shifted covariate, indirectly:
/// `A ~ Bern(½)`, `c1 ~ N(shift·A, 1)`, `c2 ~ N(0, 1)`,
/// `Y = 1[effect·c1 + c2 + direct·A + N(0, 1) > (effect·shift + direct)/2]`.
/// With `effect = 0` the covariate `c1` is a pure proxy for `A`.
/// Its schema is the `planted` preset.
pub fn planted_discrimination(n: usize, shift: f64, direct: f64, effect: f64, rng: &mut impl Rng) -> RawTable {
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random::<bool>() as u8 as f64;
        let noise: f64 = StandardNormal.sample(rng);
        let c1 = shift * a + noise;
        let c2: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        let y = effect * c1 + c2 + direct * a + e > 0.5 * (effect * shift + direct);
        rows.push(vec![c1.to_string(), c2.to_string(), (a as u8).to_string(), (y as u8).to_string()]);
    }
    RawTable {
        header: ["c1", "c2", "a", "y"].map(String::from).to_vec(),
        rows,
    }
}

/// Header plus string cells, as read from a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Rows selected by index, same header.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            header: self.header.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Offset and width of one column inside an encoded row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub width: usize,
}

/// Fitted encoding: schema plus the `(min, max)` of every continuous column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularEncoder {
    pub schema: TabularSchema,
    /// One range per continuous column, in schema order.
    pub ranges: Vec<(f64, f64)>,
}

/// Data error located at a CSV line (the header is line 1).
fn cell_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Data {
        row: row + 2,
        column: Some(column.into()),
        message: message.into(),
    }
}

impl TabularEncoder {
    fn continuous(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.schema.columns.iter().filter(|c| c.kind == ColumnType::Continuous)
    }

    fn categorical(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.schema.columns.iter().filter(|c| c.kind == ColumnType::Categorical)
    }

    fn header_positions(schema: &TabularSchema, table: &RawTable) -> Result<Vec<usize>> {
        schema
            .columns
            .iter()
            .map(|c| {
                table.column_index(&c.name).ok_or_else(|| Error::Data {
                    row: 1,
                    column: Some(c.name.clone()),
                    message: "column missing from header".into(),
                })
            })
            .collect()
    }

    fn parse_continuous(table: &RawTable, row: usize, col: usize, name: &str) -> Result<f64> {
        let cell = &table.rows[row][col];
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(cell_error(row, name, format!("{cell:?} is not a finite number"))),
        }
    }

    /// Learns the continuous ranges from `table`.
    pub fn fit(schema: &TabularSchema, table: &RawTable) -> Result<Self> {
        schema.validate()?;
        let pos = Self::header_positions(schema, table)?;
        if table.rows.is_empty() {
            return Err(Error::Data {
                row: 2,
                column: None,
                message: "table has no data rows".into(),
            });
        }
        let mut ranges = Vec::new();
        for (c, &p) in schema.columns.iter().zip(&pos) {
            if c.kind != ColumnType::Continuous {
                continue;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for r in 0..table.rows.len() {
                let v = Self::parse_continuous(table, r, p, &c.name)?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            ranges.push((lo, hi));
        }
        Ok(Self {
            schema: schema.clone(),
            ranges,
        })
    }

    pub fn width(&self) -> usize {
        self.ranges.len() + self.categorical().map(|c| c.levels.len()).sum::<usize>()
    }

    pub fn head_spec(&self, gumbel_tau: f64) -> TabularHeadSpec {
        TabularHeadSpec {
            continuous_dim: self.ranges.len(),
            discrete_groups: self.categorical().map(|c| c.levels.len()).collect(),
            gumbel_tau,
            continuous_tanh: false,
        }
    }

    /// Where a named column lives in an encoded row.
    pub fn block(&self, name: &str) -> Option<Block> {
        if let Some(i) = self.continuous().position(|c| c.name == name) {
            return Some(Block { offset: i, width: 1 });
        }
        let mut offset = self.ranges.len();
        for c in self.categorical() {
            if c.name == name {
                return Some(Block {
                    offset,
                    width: c.levels.len(),
                });
            }
            offset += c.levels.len();
        }
        None
    }

    /// Continuous `x ↦ 2(x − min)/(max − min) − 1` (0 for a constant column);
    /// categorical to one-hot.
    pub fn transform(&self, table: &RawTable) -> Result<Tensor> {
        let pos = Self::header_positions(&self.schema, table)?;
        let mut out = Tensor::zeros(table.rows.len(), self.width());
        for r in 0..table.rows.len() {
            if table.rows[r].len() != table.header.len() {
                return Err(Error::Data {
                    row: r + 2,
                    column: None,
                    message: format!("{} cells for {} header fields", table.rows[r].len(), table.header.len()),
                });
            }
            let mut k = 0;
            let mut offset = self.ranges.len();
            for (c, &p) in self.schema.columns.iter().zip(&pos) {
                match c.kind {
                    ColumnType::Continuous => {
                        let v = Self::parse_continuous(table, r, p, &c.name)?;
                        let (lo, hi) = self.ranges[k];
                        let s = if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 };
                        out.set(r, k, s);
                        k += 1;
                    }
                    ColumnType::Categorical => {
                        let cell = &table.rows[r][p];
                        let level = c
                            .level_index(cell)
                            .ok_or_else(|| cell_error(r, &c.name, format!("unknown level {cell:?}")))?;
                        out.set(r, offset + level, 1.0);
                        offset += c.levels.len();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Maps encoded rows back to cells in schema column order. One-hot blocks
    /// decode by argmax, so soft generator output is accepted.
    pub fn inverse_transform(&self, x: &Tensor) -> Result<RawTable> {
        if x.cols() != self.width() {
            return Err(Error::invalid(format!("encoded width {} but schema needs {}", x.cols(), self.width())));
        }
        let mut rows = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = x.row(i);
            let mut k = 0;
            let mut offset = self.ranges.len();
            let mut cells = Vec::with_capacity(self.schema.columns.len());
            for c in &self.schema.columns {
                match c.kind {
                    ColumnType::Continuous => {
                        cells.push(self.unscale(k, row[k]).to_string());
                        k += 1;
                    }
                    ColumnType::Categorical => {
                        let level = argmax(&row[offset..offset + c.levels.len()]);
                        cells.push(c.levels[level].clone());
                        offset += c.levels.len();
                    }
                }
            }
            rows.push(cells);
        }
        Ok(RawTable {
            header: self.schema.columns.iter().map(|c| c.name.clone()).collect(),
            rows,
        })
    }

    /// Inverse of the min-max map for continuous column `k`.
    pub fn unscale(&self, k: usize, s: f64) -> f64 {
        let (lo, hi) = self.ranges[k];
        if hi > lo {
            lo + (s + 1.0) * (hi - lo) / 2.0
        } else {
            lo
        }
    }

    /// Replaces every one-hot block by the indicator of its argmax.
    pub fn harden(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let mut offset = self.ranges.len();
        for c in self.categorical() {
            let w = c.levels.len();
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                let best = argmax(&row[offset..offset + w]);
                for (j, v) in row[offset..offset + w].iter_mut().enumerate() {
                    *v = (j == best) as u8 as f64;
                }
            }
            offset += w;
        }
        out
    }

    /// Reads a two-level column as booleans (second level is `true`).
    pub fn binary_column(&self, x: &Tensor, name: &str) -> Result<Vec<bool>> {
        let b = self
            .block(name)
            .filter(|b| b.width == 2)
            .ok_or_else(|| Error::invalid(format!("{name:?} is not a two-level categorical column")))?;
        Ok((0..x.rows()).map(|i| x.get(i, b.offset + 1) > x.get(i, b.offset)).collect())
    }

    /// Hardened features with the label block removed (and the sensitive
    /// block too when `drop_sensitive`), the label, and the sensitive
    /// attribute when the schema names one.
    pub fn supervised(&self, x: &Tensor, drop_sensitive: bool) -> Result<(Tensor, Vec<bool>, Option<Vec<bool>>)> {
        let label = self.schema.label.as_deref().ok_or_else(|| Error::Config("schema names no label column".into()))?;
        let hard = self.harden(x);
        let y = self.binary_column(&hard, label)?;
        let a = match &self.schema.sensitive {
            Some(s) => Some(self.binary_column(&hard, s)?),
            None => None,
        };
        let mut drop = vec![self.block(label).expect("validated label column")];
        if drop_sensitive {
            drop.extend(self.schema.sensitive.as_deref().and_then(|s| self.block(s)));
        }
        let keep: Vec<usize> = (0..hard.cols())
            .filter(|&j| drop.iter().all(|b| j < b.offset || j >= b.offset + b.width))
            .collect();
        let feats = Tensor::from_fn(hard.rows(), keep.len(), |i, j| hard.get(i, keep[j]));
        Ok((feats, y, a))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// Reads a CSV file and encodes it, fitting the ranges on the whole file.
pub fn load_tabular(path: &Path, schema: &TabularSchema) -> Result<(Tensor, TabularEncoder)> {
    let table = RawTable::read_csv(path)?;
    let enc = TabularEncoder::fit(schema, &table)?;
    let x = enc.transform(&table)?;
    Ok((x, enc))
}
