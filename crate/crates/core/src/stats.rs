//! Labeled data, per-class sufficient statistics and mixture parameters.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor, DEFAULT_RANK_TOL};

/// One class: its label and an `n_i × p` observation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBlock {
    pub class_id: String,
    pub observations: DMatrix<f64>,
}

impl ClassBlock {
    pub fn new(class_id: impl Into<String>, observations: DMatrix<f64>) -> Self {
        Self {
            class_id: class_id.into(),
            observations,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.nrows() == 0
    }
}

/// Per-class observation matrices sharing one dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    p: usize,
    classes: Vec<ClassBlock>,
}

impl LabeledDataset {
    pub fn new(p: usize, classes: Vec<ClassBlock>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDataset("dimension must be positive".into()));
        }
        if classes.is_empty() {
            return Err(Error::InvalidDataset("no classes".into()));
        }
        let mut seen = HashSet::new();
        for block in &classes {
            if !seen.insert(block.class_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate class id `{}`",
                    block.class_id
                )));
            }
            if block.observations.ncols() != p {
                return Err(Error::InvalidClass {
                    class_id: block.class_id.clone(),
                    reason: format!(
                        "observations have {} columns, expected {p}",
                        block.observations.ncols()
                    ),
                });
            }
            if block.len() < 2 {
                return Err(Error::InvalidClass {
                    class_id: block.class_id.clone(),
                    reason: format!("needs at least 2 observations, has {}", block.len()),
                });
            }
            if block.observations.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidClass {
                    class_id: block.class_id.clone(),
                    reason: "non-finite observation".into(),
                });
            }
        }
        Ok(Self { p, classes })
    }

    /// Group `(label, row)` pairs by label, keeping first-appearance order.
    pub fn from_labeled_rows<S: AsRef<str>>(p: usize, rows: &[(S, Vec<f64>)]) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut grouped: std::collections::HashMap<String, Vec<f64>> = Default::default();
        for (label, row) in rows {
            if row.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "row for class `{}` has {} values, expected {p}",
                    label.as_ref(),
                    row.len()
                )));
            }
            let entry = grouped.entry(label.as_ref().to_string()).or_insert_with(|| {
                order.push(label.as_ref().to_string());
                Vec::new()
            });
            entry.extend_from_slice(row);
        }
        let classes = order
            .into_iter()
            .map(|id| {
                let data = grouped.remove(&id).unwrap_or_default();
                let n = data.len() / p;
                ClassBlock::new(id, DMatrix::from_row_slice(n, p, &data))
            })
            .collect();
        Self::new(p, classes)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn classes(&self) -> &[ClassBlock] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.class_id.clone()).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.classes.iter().map(ClassBlock::len).collect()
    }

    pub fn total_observations(&self) -> usize {
        self.classes.iter().map(ClassBlock::len).sum()
    }

    /// Observation `j` of class `i` as a column vector.
    pub fn observation(&self, class: usize, row: usize) -> DVector<f64> {
        self.classes[class].observations.row(row).transpose()
    }
}

/// Sufficient statistics of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class_id: String,
    pub mean: DVector<f64>,
    /// Sum of outer products about the class sample mean.
    pub scatter: DMatrix<f64>,
    pub count: usize,
    pub rank: usize,
}

impl ClassStats {
    pub fn from_observations(class_id: &str, obs: &DMatrix<f64>) -> Result<Self> {
        let n = obs.nrows();
        if n < 2 {
            return Err(Error::InvalidClass {
                class_id: class_id.to_string(),
                reason: format!("needs at least 2 observations, has {n}"),
            });
        }
        let p = obs.ncols();
        let mean: RowDVector<f64> = obs.row_mean();
        let mut centered = obs.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let mut scatter = centered.transpose() * &centered;
        linalg::symmetrize(&mut scatter);
        let (_, rank) = linalg::log_det_and_rank(&scatter, DEFAULT_RANK_TOL)?;
        debug_assert!(rank <= p.min(n - 1));
        Ok(Self {
            class_id: class_id.to_string(),
            mean: mean.transpose(),
            scatter,
            count: n,
            rank,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.dim()
    }
}

/// Sufficient statistics for every class, in dataset order.
pub fn compute_class_stats(dataset: &LabeledDataset) -> Result<Vec<ClassStats>> {
    dataset
        .classes()
        .iter()
        .map(|c| ClassStats::from_observations(&c.class_id, &c.observations))
        .collect()
}

/// Mixture weights and latent covariance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    weights: Vec<f64>,
    covariances: Vec<DMatrix<f64>>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl MixtureParams {
    pub fn new(weights: Vec<f64>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if weights.len() != covariances.len() {
            return Err(Error::Domain(format!(
                "{} weights but {} covariances",
                weights.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0 && *w <= 1.0)) {
            return Err(Error::Domain(format!("weights must lie in (0, 1]: {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        let p = covariances[0].nrows();
        for (k, c) in covariances.iter().enumerate() {
            if c.nrows() != p || c.ncols() != p {
                return Err(Error::Domain(format!(
                    "covariance {k} is {}x{}, expected {p}x{p}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            SpdFactor::new(c).map_err(|e| {
                Error::Numerical(format!("covariance {k} is not positive definite: {e}"))
            })?;
        }
        Ok(Self {
            weights,
            covariances,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.covariances[0].nrows()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn factors(&self) -> Result<Vec<SpdFactor>> {
        self.covariances.iter().map(SpdFactor::new).collect()
    }

    /// Reorder components: component `k` of the result is component `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: perm.iter().map(|&k| self.weights[k]).collect(),
            covariances: perm.iter().map(|&k| self.covariances[k].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn block(id: &str, rows: &[&[f64]]) -> ClassBlock {
        let p = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        ClassBlock::new(id, DMatrix::from_row_slice(rows.len(), p, &flat))
    }

    #[test]
    fn two_collinear_points() {
        let ds = LabeledDataset::new(2, vec![block("a", &[&[0.0, 0.0], &[2.0, 0.0]])]).unwrap();
        let st = &compute_class_stats(&ds).unwrap()[0];
        assert_eq!(st.mean, DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(st.scatter, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        assert_eq!(st.rank, 1);
        assert_eq!(st.count, 2);
    }

    #[test]
    fn identical_observations_have_rank_zero() {
        let ds = LabeledDataset::new(
            3,
            vec![block("a", &[&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]])],
        )
        .unwrap();
        let st = &compute_class_stats(&ds).unwrap()[0];
        assert_eq!(st.rank, 0);
        assert!(st.scatter.amax() < 1e-28);
    }

    #[test]
    fn three_points_full_rank() {
        // hand outer-product sum: (1,0),(0,1),(-1,-1) about (0,0)
        let ds = LabeledDataset::new(
            2,
            vec![block("a", &[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]])],
        )
        .unwrap();
        let st = &compute_class_stats(&ds).unwrap()[0];
        assert_abs_diff_eq!(st.mean, DVector::zeros(2), epsilon = 1e-15);
        assert_abs_diff_eq!(
            st.scatter,
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
            epsilon = 1e-14
        );
        assert_eq!(st.rank, 2);
    }

    #[test]
    fn dataset_invariants() {
        let single = LabeledDataset::new(2, vec![block("lonely", &[&[0.0, 0.0]])]);
        match single {
            Err(Error::InvalidClass { class_id, .. }) => assert_eq!(class_id, "lonely"),
            other => panic!("unexpected {other:?}"),
        }
        let dup = LabeledDataset::new(
            1,
            vec![block("a", &[&[0.0], &[1.0]]), block("a", &[&[0.0], &[1.0]])],
        );
        assert!(matches!(dup, Err(Error::InvalidDataset(_))));
        let wrong_p = LabeledDataset::new(2, vec![block("a", &[&[0.0], &[1.0]])]);
        assert!(matches!(wrong_p, Err(Error::InvalidClass { .. })));
    }

    #[test]
    fn class_stats_rejects_single_observation() {
        let err = ClassStats::from_observations("x", &DMatrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, Error::InvalidClass { ref class_id, .. } if class_id == "x"));
    }

    #[test]
    fn grouping_rows_keeps_first_appearance_order() {
        let rows = vec![
            ("b", vec![0.0]),
            ("a", vec![1.0]),
            ("b", vec![2.0]),
            ("a", vec![3.0]),
        ];
        let ds = LabeledDataset::from_labeled_rows(1, &rows).unwrap();
        assert_eq!(ds.class_ids(), vec!["b", "a"]);
        assert_eq!(ds.classes()[0].observations, DMatrix::from_row_slice(2, 1, &[0.0, 2.0]));
    }

    #[test]
    fn mixture_params_validation() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert!(MixtureParams::new(vec![0.5, 0.5], vec![i.clone(), i.clone()]).is_ok());
        assert!(MixtureParams::new(vec![0.5, 0.6], vec![i.clone(), i.clone()]).is_err());
        assert!(MixtureParams::new(vec![1.0], vec![DMatrix::zeros(2, 2)]).is_err());
        assert!(MixtureParams::new(vec![1.0], vec![]).is_err());
    }
}
