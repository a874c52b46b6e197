//! Bounds on the expected conditional entropy obtained by partitioning the
//! measurement components of a collective Jacobian.
//!
//! With `H(X|Z^c) = ½(N ln 2πe − ln |Λ^{Aug−} + (A^c)ᵀA^c|)` for a component set `c`:
//!
//! * upper bound: `H(X|Z^s)` for any single set `s`,
//! * lower bound: `Σ_i H(X|Z^{c_i}) − (p − 1) H(X)` for a disjoint cover `c_1..c_p`,
//!   where an empty set contributes `H(X|∅) = H(X)`.
//!
//! Both are evaluated through a [`PosteriorLogdet`] backend: dense factorization
//! of the full posterior, or the determinant lemma over pre-recovered covariance
//! entries.

mod ramdl;

pub use ramdl::{ramdl_logdet, RamdlPrior};

use crate::belief::{gaussian_entropy, GaussianBelief, VarId};
use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky, SparseRow};
use crate::partition::{LowerSelection, NodeId, UpperSelection};
use crate::sim::DataAssociation;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Identifies the measurement a component came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentLabel {
    /// Look-ahead step, 0-based.
    pub step: usize,
    pub pose: VarId,
    pub landmark: VarId,
}

/// Stacked whitened measurement rows over the augmented state.
#[derive(Debug, Clone)]
pub struct CollectiveJacobian {
    rows: DMatrix<f64>,
    sparse: Vec<SparseRow>,
    row_groups: Vec<usize>,
    components: Vec<Vec<usize>>,
    labels: Vec<ComponentLabel>,
    n_old: usize,
}

impl CollectiveJacobian {
    /// `row_groups[r]` is the measurement component of row `r`; columns `n_old..` are new states.
    pub fn new(rows: DMatrix<f64>, row_groups: Vec<usize>, n_components: usize, n_old: usize) -> Result<Self> {
        if row_groups.len() != rows.nrows() {
            return Err(Error::DimensionMismatch {
                expected: rows.nrows(),
                found: row_groups.len(),
            });
        }
        if n_old > rows.ncols() {
            return Err(Error::DimensionMismatch {
                expected: rows.ncols(),
                found: n_old,
            });
        }
        let mut components = vec![Vec::new(); n_components];
        for (r, &g) in row_groups.iter().enumerate() {
            components
                .get_mut(g)
                .ok_or(Error::DimensionMismatch {
                    expected: n_components,
                    found: g + 1,
                })?
                .push(r);
        }
        if let Some(empty) = components.iter().position(Vec::is_empty) {
            return Err(Error::InvalidCover(format!("component {empty} has no rows")));
        }
        let sparse = linalg::sparse_rows(&rows);
        Ok(Self {
            rows,
            sparse,
            row_groups,
            components,
            labels: Vec::new(),
            n_old,
        })
    }

    /// One component per row.
    pub fn per_row(rows: DMatrix<f64>, n_old: usize) -> Result<Self> {
        let r = rows.nrows();
        Self::new(rows, (0..r).collect(), r, n_old)
    }

    /// No measurements over an `n`-dimensional state.
    pub fn empty(n: usize) -> Self {
        Self::new(DMatrix::zeros(0, n), Vec::new(), 0, n).expect("empty jacobian is valid")
    }

    pub fn with_labels(mut self, labels: Vec<ComponentLabel>) -> Result<Self> {
        if labels.len() != self.components.len() {
            return Err(Error::DimensionMismatch {
                expected: self.components.len(),
                found: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    pub fn n_old(&self) -> usize {
        self.n_old
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn row_groups(&self) -> &[usize] {
        &self.row_groups
    }

    pub fn labels(&self) -> &[ComponentLabel] {
        &self.labels
    }

    pub fn component_rows(&self, component: usize) -> &[usize] {
        &self.components[component]
    }

    /// Sparse rows belonging to a set of components.
    pub fn rows_of(&self, members: &[usize]) -> Vec<&SparseRow> {
        members
            .iter()
            .flat_map(|&c| self.components[c].iter().map(|&r| &self.sparse[r]))
            .collect()
    }

    pub fn sparse_rows(&self) -> &[SparseRow] {
        &self.sparse
    }

    /// Dense rows of a component set, in component order.
    pub fn select(&self, members: &[usize]) -> DMatrix<f64> {
        let idx: Vec<usize> = members.iter().flat_map(|&c| self.components[c].iter().copied()).collect();
        self.rows.select_rows(idx.iter())
    }

    /// Variables (by id) touched by any row, in order of first appearance.
    pub fn touched_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.sparse.iter().flat_map(|r| r.cols.iter().copied()).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }
}

/// Lower/upper bound pair on the expected conditional entropy of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsInterval {
    pub lb: f64,
    pub ub: f64,
    pub upper: NodeId,
    pub lower: Vec<NodeId>,
}

impl BoundsInterval {
    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }

    pub fn contains(&self, value: f64, slack: f64) -> bool {
        self.lb <= value + slack && value <= self.ub + slack
    }

    /// Both ends shifted by the same constant.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            lb: self.lb + offset,
            ub: self.ub + offset,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Dense,
    #[default]
    Ramdl,
}

/// Source of `ln |Λ^{Aug−} + (A^c)ᵀA^c|` for component sets `c`.
pub trait PosteriorLogdet: Sync {
    /// State dimension `N`.
    fn dim(&self) -> usize;
    /// `ln |Λ^{Aug−}|`.
    fn prior_logdet(&self) -> f64;
    fn jacobian(&self) -> &CollectiveJacobian;
    fn logdet_with(&self, members: &[usize]) -> Result<f64>;

    /// `H(X | Z^c)`.
    fn entropy_given(&self, members: &[usize]) -> Result<f64> {
        Ok(gaussian_entropy(self.dim(), self.logdet_with(members)?))
    }

    /// `H(X)` of the propagated belief.
    fn prior_entropy(&self) -> f64 {
        gaussian_entropy(self.dim(), self.prior_logdet())
    }
}

fn check_dims(prop: &GaussianBelief, a: &CollectiveJacobian) -> Result<()> {
    if a.n_cols() != prop.dim() {
        return Err(Error::DimensionMismatch {
            expected: prop.dim(),
            found: a.n_cols(),
        });
    }
    Ok(())
}

/// Factorizes the full `N × N` posterior for every query.
#[derive(Debug)]
pub struct DenseBackend<'a> {
    prop: &'a GaussianBelief,
    a: &'a CollectiveJacobian,
    prior_logdet: f64,
}

impl<'a> DenseBackend<'a> {
    pub fn new(prop: &'a GaussianBelief, a: &'a CollectiveJacobian) -> Result<Self> {
        check_dims(prop, a)?;
        let prior_logdet = Cholesky::factor(prop.info().as_matrix())?.logdet();
        Ok(Self { prop, a, prior_logdet })
    }
}

impl PosteriorLogdet for DenseBackend<'_> {
    fn dim(&self) -> usize {
        self.prop.dim()
    }

    fn prior_logdet(&self) -> f64 {
        self.prior_logdet
    }

    fn jacobian(&self) -> &CollectiveJacobian {
        self.a
    }

    fn logdet_with(&self, members: &[usize]) -> Result<f64> {
        if members.is_empty() {
            return Ok(self.prior_logdet);
        }
        let rows: Vec<SparseRow> = self.a.rows_of(members).into_iter().cloned().collect();
        let mut m = self.prop.info().as_matrix().clone();
        linalg::add_gram(&mut m, &rows);
        Ok(Cholesky::factor(&m)?.logdet())
    }
}

/// Determinant-lemma evaluation over a [`RamdlPrior`].
#[derive(Debug)]
pub struct RamdlBackend<'a> {
    prior: &'a RamdlPrior,
    a: &'a CollectiveJacobian,
}

impl<'a> RamdlBackend<'a> {
    pub fn new(prior: &'a RamdlPrior, a: &'a CollectiveJacobian) -> Result<Self> {
        if a.n_cols() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                found: a.n_cols(),
            });
        }
        Ok(Self { prior, a })
    }
}

impl PosteriorLogdet for RamdlBackend<'_> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn prior_logdet(&self) -> f64 {
        self.prior.logdet()
    }

    fn jacobian(&self) -> &CollectiveJacobian {
        self.a
    }

    fn logdet_with(&self, members: &[usize]) -> Result<f64> {
        self.prior.posterior_logdet(&self.a.rows_of(members))
    }
}

/// `H(X|Z) = ½(N ln 2πe − ln |Λ^{Aug−} + AᵀA|)` by dense factorization.
pub fn conditional_entropy_exact(prop: &GaussianBelief, a: &CollectiveJacobian) -> Result<f64> {
    check_dims(prop, a)?;
    let mut m = prop.info().as_matrix().clone();
    linalg::add_gram(&mut m, a.sparse_rows());
    Ok(gaussian_entropy(prop.dim(), Cholesky::factor(&m)?.logdet()))
}

/// `H(X|Z)` over every component through any backend.
pub fn conditional_entropy(backend: &dyn PosteriorLogdet) -> Result<f64> {
    let all: Vec<usize> = (0..backend.jacobian().n_components()).collect();
    backend.entropy_given(&all)
}

fn check_disjoint(s: &[usize], s_bar: &[usize]) -> Result<()> {
    if let Some(&c) = s.iter().find(|c| s_bar.contains(c)) {
        return Err(Error::OverlappingSets(c));
    }
    Ok(())
}

/// `g(Z^s, Z^s̄) = H(X|Z^s) + H(X|Z^s̄) − H(X)`, with `g(Z, ∅) = g(∅, Z) = H(X|Z) − H(X)`
/// and `g(∅, ∅) = −H(X)`.
pub fn g_operator(backend: &dyn PosteriorLogdet, s: &[usize], s_bar: &[usize]) -> Result<f64> {
    check_disjoint(s, s_bar)?;
    let hx = backend.prior_entropy();
    match (s.is_empty(), s_bar.is_empty()) {
        (true, true) => Ok(-hx),
        (false, true) => Ok(backend.entropy_given(s)? - hx),
        (true, false) => Ok(backend.entropy_given(s_bar)? - hx),
        (false, false) => Ok(backend.entropy_given(s)? + backend.entropy_given(s_bar)? - hx),
    }
}

/// `H(X | Z^s)` for the selected node.
pub fn upper_bound(backend: &dyn PosteriorLogdet, selection: &UpperSelection) -> Result<f64> {
    backend.entropy_given(&selection.members)
}

/// `Σ_i H(X|Z^{c_i}) − (p − 1) H(X)` over the cover.
pub fn lower_bound(backend: &dyn PosteriorLogdet, selection: &LowerSelection) -> Result<f64> {
    let terms = selection
        .members
        .iter()
        .map(|m| backend.entropy_given(m))
        .collect::<Result<Vec<_>>>()?;
    Ok(cover_sum(&terms, backend.prior_entropy()))
}

fn cover_sum(terms: &[f64], prior_entropy: f64) -> f64 {
    terms.iter().sum::<f64>() - (terms.len() as f64 - 1.0) * prior_entropy
}

/// Lower and upper bound together; a set shared by both selections is evaluated once.
pub fn partitioned_bounds(
    backend: &dyn PosteriorLogdet,
    upper: &UpperSelection,
    lower: &LowerSelection,
) -> Result<BoundsInterval> {
    let mut cache: HashMap<&[usize], f64> = HashMap::new();
    let mut terms = Vec::with_capacity(lower.members.len());
    for m in &lower.members {
        let h = match cache.get(m.as_slice()) {
            Some(&h) => h,
            None => {
                let h = backend.entropy_given(m)?;
                cache.insert(m, h);
                h
            }
        };
        terms.push(h);
    }
    let ub = match cache.get(upper.members.as_slice()) {
        Some(&h) => h,
        None => backend.entropy_given(&upper.members)?,
    };
    Ok(BoundsInterval {
        lb: cover_sum(&terms, backend.prior_entropy()),
        ub,
        upper: upper.node,
        lower: lower.nodes.clone(),
    })
}

/// Bounds from one partition level: the whole level as the lower cover and
/// the tightest node of that level as the upper bound.
pub fn level_bounds(backend: &dyn PosteriorLogdet, lower: &LowerSelection) -> Result<BoundsInterval> {
    let terms = lower
        .members
        .iter()
        .map(|m| backend.entropy_given(m))
        .collect::<Result<Vec<_>>>()?;
    let (best, ub) = terms
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, h)| if h < acc.1 { (i, h) } else { acc });
    Ok(BoundsInterval {
        lb: cover_sum(&terms, backend.prior_entropy()),
        ub,
        upper: lower.nodes[best],
        lower: lower.nodes.clone(),
    })
}

/// Partitioned bounds after checking that every measurement component only
/// involves its own pose and landmark, as dictated by the data association.
pub fn involved_state_bounds(
    prop: &GaussianBelief,
    backend: &dyn PosteriorLogdet,
    association: &DataAssociation,
    upper: &UpperSelection,
    lower: &LowerSelection,
) -> Result<BoundsInterval> {
    let a = backend.jacobian();
    check_dims(prop, a)?;
    if a.n_components() > 0 && a.labels().len() != a.n_components() {
        return Err(Error::InconsistentAssociation("jacobian components are unlabelled".into()));
    }
    let mut expected: BTreeMap<(usize, VarId), usize> = BTreeMap::new();
    for (step, ids) in association.per_step.iter().enumerate() {
        for &id in ids {
            *expected.entry((step, id)).or_default() += 1;
        }
    }
    let mut found: BTreeMap<(usize, VarId), usize> = BTreeMap::new();
    for (c, label) in a.labels().iter().enumerate() {
        *found.entry((label.step, label.landmark)).or_default() += 1;
        let pose = prop.require(label.pose)?.cols();
        let lm = prop.require(label.landmark)?.cols();
        for row in a.rows_of(&[c]) {
            if let Some(col) = row.cols.iter().find(|&&col| !pose.contains(&col) && !lm.contains(&col)) {
                return Err(Error::InconsistentAssociation(format!(
                    "component {c} touches column {col} outside its involved states"
                )));
            }
        }
    }
    if expected != found {
        return Err(Error::InconsistentAssociation(
            "association and jacobian components differ".into(),
        ));
    }
    partitioned_bounds(backend, upper, lower)
}

#[cfg(test)]
mod tests;
