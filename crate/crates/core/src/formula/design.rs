//! Design matrices with treatment coding.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{Formula, Term};
use crate::datasets::{ColumnData, DataFrame};
use crate::error::{ResiError, Result};

pub type FactorLevels = BTreeMap<String, Vec<String>>;

/// Columns occupied by one formula term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermColumns {
    pub term: Term,
    pub columns: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    labels: Vec<String>,
    intercept: bool,
    terms: Vec<TermColumns>,
    factor_levels: FactorLevels,
    rows: Vec<usize>,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn terms(&self) -> &[TermColumns] {
        &self.terms
    }

    /// Levels per categorical column; the first level is the reference.
    pub fn factor_levels(&self) -> &FactorLevels {
        &self.factor_levels
    }

    /// Source-frame indices of the rows kept after missing-value deletion.
    pub fn source_rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Columns and labels contributed by one factor of a term.
struct Block {
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn factor_block(name: &str, data: &DataFrame, rows: &[usize], levels: &FactorLevels) -> Result<Block> {
    let col = data.column(name)?;
    match col.data() {
        ColumnData::Numeric(v) => Ok(Block {
            labels: vec![name.to_string()],
            columns: vec![rows.iter().map(|&r| v[r].expect("complete row")).collect()],
        }),
        ColumnData::Categorical(v) => {
            let lv = &levels[name];
            let mut columns = vec![vec![0.0; rows.len()]; lv.len() - 1];
            for (i, &r) in rows.iter().enumerate() {
                let cell = v[r].as_deref().expect("complete row");
                let k = lv.iter().position(|l| l == cell).ok_or_else(|| {
                    ResiError::InvalidArgument(format!("level `{cell}` of `{name}` was not seen when fitting"))
                })?;
                if k > 0 {
                    columns[k - 1][i] = 1.0;
                }
            }
            Ok(Block {
                labels: lv[1..].iter().map(|l| format!("{name}{l}")).collect(),
                columns,
            })
        }
    }
}

/// Elementwise products of two blocks; the left block's columns vary fastest.
fn interact(a: Block, b: Block) -> Block {
    let mut labels = Vec::with_capacity(a.labels.len() * b.labels.len());
    let mut columns = Vec::with_capacity(labels.capacity());
    for (lb, cb) in b.labels.iter().zip(&b.columns) {
        for (la, ca) in a.labels.iter().zip(&a.columns) {
            labels.push(format!("{la}:{lb}"));
            columns.push(ca.iter().zip(cb).map(|(x, y)| x * y).collect());
        }
    }
    Block { labels, columns }
}

/// Builds the design matrix and response after dropping rows with a missing
/// value in any referenced column. Factor levels come from the retained rows.
pub fn build_design(formula: &Formula, data: &DataFrame) -> Result<(DesignMatrix, DVector<f64>)> {
    build_design_with_levels(formula, data, None)
}

/// As [`build_design`], but categorical columns listed in `levels` use that
/// coding instead of the observed levels. Used when refitting on resampled data.
pub fn build_design_with_levels(
    formula: &Formula,
    data: &DataFrame,
    levels: Option<&FactorLevels>,
) -> Result<(DesignMatrix, DVector<f64>)> {
    let vars = formula.variables();
    let rows = data.complete_rows(&vars)?;
    if rows.is_empty() {
        return Err(ResiError::NoRows);
    }

    let response = data.column(formula.response())?;
    let y = match response.as_numeric() {
        Some(v) => DVector::from_iterator(rows.len(), rows.iter().map(|&r| v[r].expect("complete row"))),
        None => return Err(ResiError::NonNumericResponse(formula.response().to_string())),
    };

    let mut factor_levels = FactorLevels::new();
    for name in &vars[1..] {
        let col = data.column(name)?;
        if col.as_categorical().is_none() {
            continue;
        }
        let lv = match levels.and_then(|l| l.get(*name)) {
            Some(lv) => lv.clone(),
            None => {
                let observed = data.take_rows(&rows).column(name)?.levels();
                if observed.len() < 2 {
                    return Err(ResiError::SingleLevelFactor(name.to_string()));
                }
                observed
            }
        };
        factor_levels.insert(name.to_string(), lv);
    }

    let n = rows.len();
    let mut labels = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    if formula.has_intercept() {
        labels.push("(Intercept)".to_string());
        columns.push(vec![1.0; n]);
    }
    let mut terms = Vec::with_capacity(formula.terms().len());
    for term in formula.terms() {
        let mut factors = term.factors().iter();
        let first = factors.next().expect("terms are non-empty");
        let mut block = factor_block(first, data, &rows, &factor_levels)?;
        for f in factors {
            block = interact(block, factor_block(f, data, &rows, &factor_levels)?);
        }
        let start = columns.len();
        labels.extend(block.labels);
        columns.extend(block.columns);
        terms.push(TermColumns {
            term: term.clone(),
            columns: start..columns.len(),
        });
    }

    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    Ok((
        DesignMatrix {
            x,
            labels,
            intercept: formula.has_intercept(),
            terms,
            factor_levels,
            rows,
        },
        y,
    ))
}
