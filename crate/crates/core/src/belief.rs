//! Information-form Gaussian beliefs over a planar SLAM state.

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky, SparseRow};
use crate::motion::{Action, MotionSpec, Pose2};
use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// `ln(2πe)`.
pub const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

/// Differential entropy (nats) of an `n`-dimensional Gaussian with information log-determinant `logdet_info`.
pub fn gaussian_entropy(dim: usize, logdet_info: f64) -> f64 {
    0.5 * (dim as f64 * LN_2PI_E - logdet_info)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarId {
    Pose(usize),
    Landmark(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Pose,
    Landmark,
}

impl VarKind {
    pub fn dim(self) -> usize {
        match self {
            VarKind::Pose => 3,
            VarKind::Landmark => 2,
        }
    }
}

impl VarId {
    pub fn kind(self) -> VarKind {
        match self {
            VarId::Pose(_) => VarKind::Pose,
            VarId::Landmark(_) => VarKind::Landmark,
        }
    }
}

/// Placement of one variable block inside the joint state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableIndex {
    pub id: VarId,
    pub kind: VarKind,
    pub dim: usize,
    pub offset: usize,
}

impl VariableIndex {
    pub fn new(id: VarId, offset: usize) -> Self {
        let kind = id.kind();
        Self {
            id,
            kind,
            dim: kind.dim(),
            offset,
        }
    }

    pub fn cols(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.dim
    }
}

/// Symmetric information matrix `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix(DMatrix<f64>);

impl InfoMatrix {
    /// Accepts a matrix symmetric to within `1e-12` relative and stores its symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let asym = linalg::asymmetry(&m);
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self(sym))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `Λ + Σ rᵀ r` over the given rows.
    pub fn plus_gram(&self, rows: &[SparseRow]) -> Self {
        let mut m = self.0.clone();
        linalg::add_gram(&mut m, rows);
        Self(m)
    }

    pub fn factor(&self) -> Result<Cholesky> {
        Cholesky::factor(&self.0)
    }
}

/// Exact log-determinant of an information matrix through its Cholesky factor.
pub fn logdet_exact(info: &InfoMatrix) -> Result<f64> {
    Ok(info.factor()?.logdet())
}

/// A variable to append during augmentation, with its predicted value.
#[derive(Debug, Clone, PartialEq)]
pub struct NewVariable {
    pub id: VarId,
    pub value: Vec<f64>,
}

/// Joint Gaussian belief `N(μ, Λ⁻¹)` in information form.
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    info: InfoMatrix,
    mean: DVector<f64>,
    index: Vec<VariableIndex>,
    lookup: HashMap<VarId, usize>,
}

impl GaussianBelief {
    /// Lays the variables out contiguously in the given order.
    pub fn new(info: InfoMatrix, mean: DVector<f64>, vars: &[VarId]) -> Result<Self> {
        let mut offset = 0;
        let index = vars
            .iter()
            .map(|&id| {
                let v = VariableIndex::new(id, offset);
                offset += v.dim;
                v
            })
            .collect();
        Self::from_parts(info, mean, index)
    }

    pub fn from_parts(info: InfoMatrix, mean: DVector<f64>, index: Vec<VariableIndex>) -> Result<Self> {
        let n = info.dim();
        if mean.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: mean.len(),
            });
        }
        let mut covered = vec![false; n];
        let mut lookup = HashMap::with_capacity(index.len());
        for (k, v) in index.iter().enumerate() {
            if v.dim != v.kind.dim() || v.kind != v.id.kind() || v.offset + v.dim > n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.offset + v.dim,
                });
            }
            if lookup.insert(v.id, k).is_some() {
                return Err(Error::DuplicateVariable(v.id));
            }
            for c in v.cols() {
                if covered[c] {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: c,
                    });
                }
                covered[c] = true;
            }
        }
        if let Some(gap) = covered.iter().position(|c| !c) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: gap,
            });
        }
        Ok(Self {
            info,
            mean,
            index,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.info.dim()
    }

    pub fn info(&self) -> &InfoMatrix {
        &self.info
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn index(&self) -> &[VariableIndex] {
        &self.index
    }

    pub fn variable(&self, id: VarId) -> Option<&VariableIndex> {
        self.lookup.get(&id).map(|&k| &self.index[k])
    }

    pub fn require(&self, id: VarId) -> Result<&VariableIndex> {
        self.variable(id).ok_or(Error::UnknownVariable(id))
    }

    pub fn value(&self, id: VarId) -> Option<&[f64]> {
        let v = self.variable(id)?;
        Some(&self.mean.as_slice()[v.cols()])
    }

    pub fn pose(&self, id: VarId) -> Option<Pose2> {
        match id {
            VarId::Pose(_) => self.value(id).map(Pose2::from_slice),
            VarId::Landmark(_) => None,
        }
    }

    /// The pose with the largest id, i.e. the most recent one.
    pub fn latest_pose(&self) -> Option<&VariableIndex> {
        self.index
            .iter()
            .filter(|v| matches!(v.id, VarId::Pose(_)))
            .max_by_key(|v| v.id)
    }

    pub fn landmarks(&self) -> impl Iterator<Item = &VariableIndex> {
        self.index
            .iter()
            .filter(|v| matches!(v.id, VarId::Landmark(_)))
    }

    /// `½(N ln 2πe − ln |Λ|)` nats.
    pub fn entropy(&self) -> Result<f64> {
        Ok(gaussian_entropy(self.dim(), logdet_exact(&self.info)?))
    }

    /// Same belief with `Σ rᵀ r` added to the information matrix.
    pub fn with_information(&self, rows: &[SparseRow]) -> Self {
        Self {
            info: self.info.plus_gram(rows),
            ..self.clone()
        }
    }

    /// Appends new variables with zero information (`Λ^Aug`). The result is generally not PD.
    pub fn augment(&self, new_vars: &[NewVariable]) -> Result<Self> {
        let mut index = self.index.clone();
        let mut offset = self.dim();
        let mut mean: Vec<f64> = self.mean.iter().copied().collect();
        for nv in new_vars {
            if self.lookup.contains_key(&nv.id) || index[self.index.len()..].iter().any(|v| v.id == nv.id) {
                return Err(Error::DuplicateVariable(nv.id));
            }
            let v = VariableIndex::new(nv.id, offset);
            if nv.value.len() != v.dim {
                return Err(Error::DimensionMismatch {
                    expected: v.dim,
                    found: nv.value.len(),
                });
            }
            mean.extend_from_slice(&nv.value);
            offset += v.dim;
            index.push(v);
        }
        let n = offset;
        let old = self.dim();
        let mut info = DMatrix::zeros(n, n);
        info.view_mut((0, 0), (old, old))
            .copy_from(self.info.as_matrix());
        Self::from_parts(InfoMatrix(info), DVector::from_vec(mean), index)
    }

    /// Propagated belief `Λ^{Aug−}`: one new pose per action with its motion information added.
    pub fn propagate(&self, actions: &[Action], motion: &MotionSpec) -> Result<Self> {
        Ok(self.propagate_detailed(actions, motion)?.belief)
    }

    pub fn propagate_detailed(&self, actions: &[Action], motion: &MotionSpec) -> Result<Propagation> {
        let prior_dim = self.dim();
        if actions.is_empty() {
            return Ok(Propagation {
                belief: self.clone(),
                prior_dim,
                steps: Vec::new(),
                motion_rows: Vec::new(),
            });
        }
        let whiten = motion.whitener()?;
        let start = *self.latest_pose().ok_or(Error::MissingPose)?;
        let VarId::Pose(first_id) = start.id else {
            unreachable!()
        };
        let mut pose = Pose2::from_slice(&self.mean.as_slice()[start.cols()]);
        let mut new_vars = Vec::with_capacity(actions.len());
        let mut jacobians = Vec::with_capacity(actions.len());
        for (k, a) in actions.iter().enumerate() {
            jacobians.push(motion.model.jacobian(pose, a));
            pose = motion.model.predict(pose, a);
            new_vars.push(NewVariable {
                id: VarId::Pose(first_id + 1 + k),
                value: vec![pose.x, pose.y, pose.theta],
            });
        }
        let aug = self.augment(&new_vars)?;
        let mut rows = Vec::with_capacity(3 * actions.len());
        let mut steps = Vec::with_capacity(actions.len());
        let mut prev = start;
        for (nv, jac) in new_vars.iter().zip(jacobians) {
            let next = *aug.variable(nv.id).expect("just augmented");
            // whitened residual rows W^{-1/2} [−F | I]
            let left = -(whiten * jac);
            for r in 0..3 {
                let mut row = SparseRow::default();
                for c in 0..3 {
                    let v = left[(r, c)];
                    if v != 0.0 {
                        row.cols.push(prev.offset + c);
                        row.vals.push(v);
                    }
                }
                for c in 0..3 {
                    let v = whiten[(r, c)];
                    if v != 0.0 {
                        row.cols.push(next.offset + c);
                        row.vals.push(v);
                    }
                }
                rows.push(row);
            }
            steps.push(MotionStep {
                from: prev.id,
                to: next.id,
                jacobian: jac,
                noise: motion.noise,
            });
            prev = next;
        }
        let belief = aug.with_information(&rows);
        Ok(Propagation {
            belief,
            prior_dim,
            steps,
            motion_rows: rows,
        })
    }

    /// Factorizes `Λ` once for repeated covariance queries.
    pub fn factorize(&self) -> Result<FactoredBelief<'_>> {
        let chol = self.info.factor()?;
        Ok(FactoredBelief { belief: self, chol })
    }

    /// Joint marginal covariance of the requested variables.
    pub fn recover_covariance_entries(&self, vars: &[VarId]) -> Result<CovarianceTable> {
        for &id in vars {
            self.require(id)?;
        }
        if vars.is_empty() {
            return Ok(CovarianceTable::empty());
        }
        self.factorize()?.covariance_entries(vars)
    }
}

/// One motion factor added during propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionStep {
    pub from: VarId,
    pub to: VarId,
    /// `∂f/∂x` at the predicted mean of `from`.
    pub jacobian: Matrix3<f64>,
    pub noise: Matrix3<f64>,
}

/// Result of propagating a belief through an action sequence.
#[derive(Debug, Clone)]
pub struct Propagation {
    /// `Λ^{Aug−}`.
    pub belief: GaussianBelief,
    /// Dimension of the belief before augmentation.
    pub prior_dim: usize,
    pub steps: Vec<MotionStep>,
    /// Whitened motion-factor rows over the augmented state.
    pub motion_rows: Vec<SparseRow>,
}

impl std::ops::Deref for Propagation {
    type Target = GaussianBelief;

    fn deref(&self) -> &GaussianBelief {
        &self.belief
    }
}

/// A belief together with the Cholesky factor of its information matrix.
#[derive(Debug, Clone)]
pub struct FactoredBelief<'a> {
    belief: &'a GaussianBelief,
    chol: Cholesky,
}

impl FactoredBelief<'_> {
    pub fn logdet(&self) -> f64 {
        self.chol.logdet()
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(self.belief.dim(), self.logdet())
    }

    /// Solves `Λ X = E` for the unit columns of the requested variables.
    pub fn covariance_entries(&self, vars: &[VarId]) -> Result<CovarianceTable> {
        let n = self.belief.dim();
        let mut selected = Vec::with_capacity(vars.len());
        for &id in vars {
            let v = *self.belief.require(id)?;
            if !selected.iter().any(|s: &VariableIndex| s.id == id) {
                selected.push(v);
            }
        }
        let cols: Vec<usize> = selected.iter().flat_map(|v| v.cols()).collect();
        let mut rhs = DMatrix::zeros(n, cols.len());
        for (k, &c) in cols.iter().enumerate() {
            rhs[(c, k)] = 1.0;
        }
        let x = self.chol.solve(&rhs);
        let k = cols.len();
        let mut cov = DMatrix::from_fn(k, k, |i, j| x[(cols[i], j)]);
        // enforce symmetry of the recovered block
        for j in 0..k {
            for i in j + 1..k {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok(CovarianceTable::new(selected, cov))
    }
}

/// Covariance sub-matrix over a set of variables, addressed by global state columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTable {
    vars: Vec<VariableIndex>,
    local_offsets: Vec<usize>,
    matrix: DMatrix<f64>,
    col_map: HashMap<usize, usize>,
}

impl CovarianceTable {
    pub fn empty() -> Self {
        Self::new(Vec::new(), DMatrix::zeros(0, 0))
    }

    /// `vars` carry global offsets; `matrix` is laid out in the order of `vars`.
    pub fn new(vars: Vec<VariableIndex>, matrix: DMatrix<f64>) -> Self {
        let mut local_offsets = Vec::with_capacity(vars.len());
        let mut col_map = HashMap::new();
        let mut off = 0;
        for v in &vars {
            local_offsets.push(off);
            for (k, c) in v.cols().enumerate() {
                col_map.insert(c, off + k);
            }
            off += v.dim;
        }
        assert_eq!(matrix.nrows(), off, "covariance block size");
        Self {
            vars,
            local_offsets,
            matrix,
            col_map,
        }
    }

    pub fn vars(&self) -> &[VariableIndex] {
        &self.vars
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn contains(&self, id: VarId) -> bool {
        self.vars.iter().any(|v| v.id == id)
    }

    /// Local row/column of a global state column.
    pub fn local(&self, global_col: usize) -> Option<usize> {
        self.col_map.get(&global_col).copied()
    }

    pub fn local_offset(&self, id: VarId) -> Option<usize> {
        self.vars
            .iter()
            .position(|v| v.id == id)
            .map(|k| self.local_offsets[k])
    }

    /// Covariance block `Σ[a, b]`.
    pub fn block(&self, a: VarId, b: VarId) -> Option<DMatrix<f64>> {
        let ia = self.vars.iter().position(|v| v.id == a)?;
        let ib = self.vars.iter().position(|v| v.id == b)?;
        Some(
            self.matrix
                .view(
                    (self.local_offsets[ia], self.local_offsets[ib]),
                    (self.vars[ia].dim, self.vars[ib].dim),
                )
                .into_owned(),
        )
    }
}
