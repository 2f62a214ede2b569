//! Sparse robust nonlinear least squares (Levenberg–Marquardt).
//!
//! A [`Problem`] owns parameter blocks (Euclidean vectors or SO(3) rotations
//! stored as `[w, x, y, z]` quaternions with 3-dim tangent updates) and
//! residual blocks. Each residual block is a [`CostFunction`] over a list of
//! parameter blocks, optionally robustified with a Huber loss applied to each
//! consecutive chunk of `loss_chunk` residual components.
//!
//! Cost convention: `cost = Σ ρ(‖r_c‖²)` over all robustified chunks
//! (`ρ(s) = s` without a loss).
//!
//! Normal equations are assembled in skyline storage in parameter-block
//! creation order, so callers that add blocks in a banded order (spline
//! control points in time order, global parameters last) get a cheap
//! factorization.

mod loss;
mod skyline;

pub use loss::{huber_loss, HuberLoss};
pub use skyline::{SkylineCholesky, SkylineMatrix};

use crate::geometry::Rotation;
use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("residual block {block} ({group}) evaluated to a non-finite value")]
    Evaluation { block: usize, group: String },
    #[error("normal equations are rank deficient even at maximum damping")]
    Conditioning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manifold {
    Euclidean,
    So3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone)]
pub struct ParameterBlock {
    manifold: Manifold,
    values: Vec<f64>,
    constant: bool,
    bounds: Option<(Vec<f64>, Vec<f64>)>,
}

impl ParameterBlock {
    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn tangent_dim(&self) -> usize {
        match self.manifold {
            Manifold::Euclidean => self.values.len(),
            Manifold::So3 => 3,
        }
    }

    /// `x ⊕ δ`, projected onto the box bounds when present.
    fn plus(&self, values: &[f64], delta: &[f64]) -> Vec<f64> {
        match self.manifold {
            Manifold::Euclidean => {
                let mut out: Vec<f64> = values.iter().zip(delta).map(|(x, d)| x + d).collect();
                if let Some((lo, hi)) = &self.bounds {
                    for (v, (l, h)) in out.iter_mut().zip(lo.iter().zip(hi)) {
                        *v = v.clamp(*l, *h);
                    }
                }
                out
            }
            Manifold::So3 => {
                let r = rotation_from_slice(values).retract(&Vector3::new(delta[0], delta[1], delta[2]));
                r.quaternion().to_vec()
            }
        }
    }
}

/// Reads an SO(3) parameter block.
pub fn rotation_from_slice(v: &[f64]) -> Rotation {
    Rotation::from_quaternion(v[0], v[1], v[2], v[3])
}

/// A residual term. Parameter slices arrive in the order the block was
/// registered with; SO(3) blocks are `[w, x, y, z]`.
pub trait CostFunction: Send + Sync {
    fn residual_dim(&self) -> usize;

    /// Writes the residual. Returns `false` if the residual cannot be
    /// evaluated at these parameters (e.g. a point behind a camera).
    fn evaluate(&self, params: &[&[f64]], residuals: &mut [f64]) -> bool;

    /// Optional analytic tangent-space Jacobians. `jacobians[k]` is
    /// `residual_dim × tangent_dim(block k)`; entries for constant blocks may
    /// be left untouched. Returns `None` to fall back to finite differences.
    fn jacobians(&self, _params: &[&[f64]], _residuals: &mut [f64], _jacobians: &mut [DMatrix<f64>]) -> Option<bool> {
        None
    }
}

pub struct ResidualBlock {
    cost: Box<dyn CostFunction>,
    params: Vec<BlockId>,
    loss: Option<HuberLoss>,
    loss_chunk: usize,
    group: String,
}

impl ResidualBlock {
    pub fn params(&self) -> &[BlockId] {
        &self.params
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn residual_dim(&self) -> usize {
        self.cost.residual_dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub function_tolerance: f64,
    /// Stop when the max-norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the step is this small relative to the parameter norm.
    pub parameter_tolerance: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
    /// Forward-difference step, relative to the coordinate magnitude.
    pub fd_relative_step: f64,
    pub fd_min_step: f64,
    /// Try the undamped Gauss–Newton step before the damped one.
    pub gauss_newton_first: bool,
}

pub const DEFAULT_MAX_ITERATIONS: usize = 100;
pub const DEFAULT_FUNCTION_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_GRADIENT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_INITIAL_DAMPING: f64 = 1e-4;

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            function_tolerance: DEFAULT_FUNCTION_TOLERANCE,
            gradient_tolerance: DEFAULT_GRADIENT_TOLERANCE,
            parameter_tolerance: 1e-14,
            initial_damping: DEFAULT_INITIAL_DAMPING,
            max_damping: 1e16,
            fd_relative_step: 1e-7,
            fd_min_step: 1e-9,
            gauss_newton_first: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    FunctionTolerance,
    GradientTolerance,
    ParameterTolerance,
    MaxIterations,
    /// Damping reached its ceiling without finding a cost decrease.
    NoProgress,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// Unrobustified RMS of the residual components per group.
    pub group_rms: BTreeMap<String, f64>,
    pub residual_count: usize,
    /// Squared pivot ratio of the final undamped normal equations
    /// (infinite when they are singular).
    pub condition_estimate: f64,
}

#[derive(Default)]
pub struct Problem {
    blocks: Vec<ParameterBlock>,
    residuals: Vec<ResidualBlock>,
}

struct Layout {
    /// Column offset of each block (`None` for constant blocks).
    offsets: Vec<Option<usize>>,
    dim: usize,
}

struct Linearization {
    cost: f64,
    gradient: Vec<f64>,
    hessian: SkylineMatrix,
}

impl Problem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_parameter_block(&mut self, manifold: Manifold, values: Vec<f64>) -> BlockId {
        match manifold {
            Manifold::So3 => assert_eq!(values.len(), 4, "SO(3) blocks hold a quaternion"),
            Manifold::Euclidean => assert!(!values.is_empty()),
        }
        self.blocks.push(ParameterBlock {
            manifold,
            values,
            constant: false,
            bounds: None,
        });
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_rotation_block(&mut self, r: &Rotation) -> BlockId {
        self.add_parameter_block(Manifold::So3, r.quaternion().to_vec())
    }

    pub fn set_constant(&mut self, id: BlockId, constant: bool) {
        self.blocks[id.0].constant = constant;
    }

    pub fn set_bounds(&mut self, id: BlockId, lower: Vec<f64>, upper: Vec<f64>) -> Result<(), SolverError> {
        let b = &mut self.blocks[id.0];
        if b.manifold != Manifold::Euclidean || lower.len() != b.values.len() || upper.len() != b.values.len() {
            return Err(SolverError::InvalidArgument("bounds need a Euclidean block of matching size".into()));
        }
        if lower.iter().zip(&upper).any(|(l, h)| !(l <= h)) {
            return Err(SolverError::InvalidArgument("lower bound above upper bound".into()));
        }
        for (v, (l, h)) in b.values.iter_mut().zip(lower.iter().zip(&upper)) {
            *v = v.clamp(*l, *h);
        }
        b.bounds = Some((lower, upper));
        Ok(())
    }

    pub fn add_residual_block(
        &mut self,
        cost: Box<dyn CostFunction>,
        params: Vec<BlockId>,
        loss: Option<HuberLoss>,
        loss_chunk: Option<usize>,
        group: &str,
    ) -> usize {
        let dim = cost.residual_dim();
        let chunk = loss_chunk.unwrap_or(dim).max(1);
        assert!(dim % chunk == 0, "loss chunk must divide the residual dimension");
        for p in &params {
            assert!(p.0 < self.blocks.len(), "unknown parameter block {p:?}");
        }
        self.residuals.push(ResidualBlock {
            cost,
            params,
            loss,
            loss_chunk: chunk,
            group: group.to_string(),
        });
        self.residuals.len() - 1
    }

    pub fn block(&self, id: BlockId) -> &ParameterBlock {
        &self.blocks[id.0]
    }

    pub fn values(&self, id: BlockId) -> &[f64] {
        &self.blocks[id.0].values
    }

    pub fn rotation(&self, id: BlockId) -> Rotation {
        rotation_from_slice(&self.blocks[id.0].values)
    }

    pub fn set_values(&mut self, id: BlockId, values: Vec<f64>) {
        assert_eq!(values.len(), self.blocks[id.0].values.len());
        self.blocks[id.0].values = values;
    }

    pub fn residual_blocks(&self) -> &[ResidualBlock] {
        &self.residuals
    }

    pub fn num_residual_blocks(&self) -> usize {
        self.residuals.len()
    }

    pub fn num_parameter_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn layout(&self) -> Layout {
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut dim = 0;
        for b in &self.blocks {
            if b.constant {
                offsets.push(None);
            } else {
                offsets.push(Some(dim));
                dim += b.tangent_dim();
            }
        }
        Layout { offsets, dim }
    }

    fn gather<'a>(&'a self, state: &'a [Vec<f64>], rb: &ResidualBlock) -> Vec<&'a [f64]> {
        rb.params.iter().map(|p| state[p.0].as_slice()).collect()
    }

    /// Raw residual of block `i` at the current values.
    pub fn evaluate_residual(&self, i: usize) -> Option<Vec<f64>> {
        let rb = &self.residuals[i];
        let params: Vec<&[f64]> = rb.params.iter().map(|p| self.blocks[p.0].values.as_slice()).collect();
        let mut r = vec![0.0; rb.cost.residual_dim()];
        (rb.cost.evaluate(&params, &mut r) && r.iter().all(|v| v.is_finite())).then_some(r)
    }

    /// Robust cost `Σ ρ(‖r_c‖²)` at the current values.
    pub fn cost(&self) -> Result<f64, SolverError> {
        let state: Vec<Vec<f64>> = self.blocks.iter().map(|b| b.values.clone()).collect();
        self.cost_at(&state)
    }

    fn block_cost(rb: &ResidualBlock, r: &[f64]) -> f64 {
        r.chunks(rb.loss_chunk)
            .map(|c| {
                let s: f64 = c.iter().map(|v| v * v).sum();
                match rb.loss {
                    Some(l) => l.evaluate(s).0,
                    None => s,
                }
            })
            .sum()
    }

    fn cost_at(&self, state: &[Vec<f64>]) -> Result<f64, SolverError> {
        self.residuals
            .par_iter()
            .enumerate()
            .map(|(i, rb)| {
                let params = self.gather(state, rb);
                let mut r = vec![0.0; rb.cost.residual_dim()];
                if !rb.cost.evaluate(&params, &mut r) || !r.iter().all(|v| v.is_finite()) {
                    return Err(SolverError::Evaluation {
                        block: i,
                        group: rb.group.clone(),
                    });
                }
                Ok(Self::block_cost(rb, &r))
            })
            .try_reduce(|| 0.0, |a, b| Ok(a + b))
    }

    /// Residual and tangent Jacobians (one matrix per parameter of the block)
    /// at `state`, analytic when the cost function provides them.
    fn residual_and_jacobians(
        &self,
        state: &[Vec<f64>],
        rb: &ResidualBlock,
        options: &SolverOptions,
    ) -> Option<(Vec<f64>, Vec<DMatrix<f64>>)> {
        let params = self.gather(state, rb);
        let m = rb.cost.residual_dim();
        let mut r = vec![0.0; m];
        let mut jac: Vec<DMatrix<f64>> = rb
            .params
            .iter()
            .map(|p| DMatrix::zeros(m, self.blocks[p.0].tangent_dim()))
            .collect();
        match rb.cost.jacobians(&params, &mut r, &mut jac) {
            Some(true) => {}
            Some(false) => return None,
            None => {
                if !rb.cost.evaluate(&params, &mut r) {
                    return None;
                }
                self.finite_difference(state, rb, &r, &mut jac, options)?;
            }
        }
        if !r.iter().all(|v| v.is_finite()) || !jac.iter().all(|j| j.iter().all(|v| v.is_finite())) {
            return None;
        }
        Some((r, jac))
    }

    fn finite_difference(
        &self,
        state: &[Vec<f64>],
        rb: &ResidualBlock,
        r0: &[f64],
        jac: &mut [DMatrix<f64>],
        options: &SolverOptions,
    ) -> Option<()> {
        let m = r0.len();
        let mut r = vec![0.0; m];
        for (k, p) in rb.params.iter().enumerate() {
            let block = &self.blocks[p.0];
            if block.constant {
                continue;
            }
            for c in 0..block.tangent_dim() {
                let base = &state[p.0];
                let h = match block.manifold {
                    Manifold::Euclidean => (options.fd_relative_step * base[c].abs()).max(options.fd_min_step),
                    Manifold::So3 => options.fd_relative_step,
                };
                let mut delta = vec![0.0; block.tangent_dim()];
                delta[c] = h;
                let moved = match block.manifold {
                    Manifold::Euclidean => {
                        let mut v = base.clone();
                        v[c] += h;
                        v
                    }
                    Manifold::So3 => block.plus(base, &delta),
                };
                let mut params = self.gather(state, rb);
                params[k] = &moved;
                if !rb.cost.evaluate(&params, &mut r) {
                    return None;
                }
                for i in 0..m {
                    jac[k][(i, c)] = (r[i] - r0[i]) / h;
                }
            }
        }
        Some(())
    }

    /// Central-difference and analytic Jacobians of residual block `i` at the
    /// current values, for cross-checking analytic overrides. Returns `None`
    /// when the block has no analytic Jacobian or cannot be evaluated.
    pub fn jacobian_pair(&self, i: usize) -> Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
        let state: Vec<Vec<f64>> = self.blocks.iter().map(|b| b.values.clone()).collect();
        let rb = &self.residuals[i];
        let params = self.gather(&state, rb);
        let m = rb.cost.residual_dim();
        let mut r = vec![0.0; m];
        let mut analytic: Vec<DMatrix<f64>> = rb
            .params
            .iter()
            .map(|p| DMatrix::zeros(m, self.blocks[p.0].tangent_dim()))
            .collect();
        if rb.cost.jacobians(&params, &mut r, &mut analytic) != Some(true) {
            return None;
        }
        let mut fd: Vec<DMatrix<f64>> = analytic.iter().map(|j| DMatrix::zeros(j.nrows(), j.ncols())).collect();
        let (mut rp, mut rm) = (vec![0.0; m], vec![0.0; m]);
        for (k, p) in rb.params.iter().enumerate() {
            let block = &self.blocks[p.0];
            if block.constant {
                analytic[k].fill(0.0);
                continue;
            }
            for c in 0..block.tangent_dim() {
                let base = &state[p.0];
                let h = match block.manifold {
                    Manifold::Euclidean => (1e-6 * base[c].abs()).max(1e-7),
                    Manifold::So3 => 1e-6,
                };
                let mut delta = vec![0.0; block.tangent_dim()];
                delta[c] = h;
                let plus = block.plus(base, &delta);
                delta[c] = -h;
                let minus = block.plus(base, &delta);
                let mut args = params.clone();
                args[k] = &plus;
                if !rb.cost.evaluate(&args, &mut rp) {
                    return None;
                }
                args[k] = &minus;
                if !rb.cost.evaluate(&args, &mut rm) {
                    return None;
                }
                for row in 0..m {
                    fd[k][(row, c)] = (rp[row] - rm[row]) / (2.0 * h);
                }
            }
        }
        Some((fd, analytic))
    }

    fn envelope(&self, layout: &Layout) -> Vec<usize> {
        let mut first: Vec<usize> = (0..layout.dim).collect();
        for rb in &self.residuals {
            let cols: Vec<(usize, usize)> = rb
                .params
                .iter()
                .filter_map(|p| layout.offsets[p.0].map(|o| (o, self.blocks[p.0].tangent_dim())))
                .collect();
            let Some(min_col) = cols.iter().map(|c| c.0).min() else {
                continue;
            };
            for (o, d) in cols {
                for c in o..o + d {
                    first[c] = first[c].min(min_col);
                }
            }
        }
        first
    }

    fn linearize(
        &self,
        state: &[Vec<f64>],
        layout: &Layout,
        first: &[usize],
        options: &SolverOptions,
    ) -> Result<Linearization, SolverError> {
        let evaluated: Vec<Option<(Vec<f64>, Vec<DMatrix<f64>>)>> = self
            .residuals
            .par_iter()
            .map(|rb| self.residual_and_jacobians(state, rb, options))
            .collect();
        let mut hessian = SkylineMatrix::new(first.to_vec());
        let mut gradient = vec![0.0; layout.dim];
        let mut cost = 0.0;
        for (i, (rb, ev)) in self.residuals.iter().zip(evaluated).enumerate() {
            let Some((mut r, mut jac)) = ev else {
                return Err(SolverError::Evaluation {
                    block: i,
                    group: rb.group.clone(),
                });
            };
            cost += Self::block_cost(rb, &r);
            if let Some(loss) = rb.loss {
                for (ci, chunk) in r.chunks_mut(rb.loss_chunk).enumerate() {
                    let s: f64 = chunk.iter().map(|v| v * v).sum();
                    let w = loss.evaluate(s).1.sqrt();
                    if w != 1.0 {
                        chunk.iter_mut().for_each(|v| *v *= w);
                        for j in jac.iter_mut() {
                            j.rows_mut(ci * rb.loss_chunk, rb.loss_chunk).scale_mut(w);
                        }
                    }
                }
            }
            let vars: Vec<(usize, &DMatrix<f64>)> = rb
                .params
                .iter()
                .zip(&jac)
                .filter_map(|(p, j)| layout.offsets[p.0].map(|o| (o, j)))
                .collect();
            for (a, &(oa, ja)) in vars.iter().enumerate() {
                for (c, v) in ja.tr_mul(&nalgebra::DVector::from_column_slice(&r)).iter().enumerate() {
                    gradient[oa + c] += v;
                }
                for &(ob, jb) in &vars[..=a] {
                    let block = ja.tr_mul(jb);
                    for i in 0..block.nrows() {
                        for j in 0..block.ncols() {
                            let (gr, gc) = (oa + i, ob + j);
                            if gc <= gr {
                                hessian.add(gr, gc, block[(i, j)]);
                            } else if oa == ob {
                                // Same block: upper triangle mirrors the lower.
                            } else {
                                hessian.add(gc, gr, block[(i, j)]);
                            }
                        }
                    }
                }
            }
        }
        Ok(Linearization {
            cost,
            gradient,
            hessian,
        })
    }

    fn apply_step(&self, state: &[Vec<f64>], layout: &Layout, step: &[f64]) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .zip(state)
            .zip(&layout.offsets)
            .map(|((b, v), off)| match off {
                Some(o) => b.plus(v, &step[*o..*o + b.tangent_dim()]),
                None => v.clone(),
            })
            .collect()
    }

    /// Tangent-space difference `new ⊖ old` (used to get the effective step
    /// after bound projection).
    fn effective_step(&self, old: &[Vec<f64>], new: &[Vec<f64>], layout: &Layout) -> Vec<f64> {
        let mut out = vec![0.0; layout.dim];
        for ((b, (o, n)), off) in self.blocks.iter().zip(old.iter().zip(new)).zip(&layout.offsets) {
            let Some(off) = *off else { continue };
            match b.manifold {
                Manifold::Euclidean => {
                    for c in 0..o.len() {
                        out[off + c] = n[c] - o[c];
                    }
                }
                Manifold::So3 => {
                    let d = rotation_from_slice(o).between(&rotation_from_slice(n));
                    out[off..off + 3].copy_from_slice(d.as_slice());
                }
            }
        }
        out
    }

    fn group_rms(&self, state: &[Vec<f64>]) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for rb in &self.residuals {
            let params = self.gather(state, rb);
            let mut r = vec![0.0; rb.cost.residual_dim()];
            rb.cost.evaluate(&params, &mut r);
            let e = acc.entry(rb.group.clone()).or_insert((0.0, 0));
            e.0 += r.iter().map(|v| v * v).sum::<f64>();
            e.1 += r.len();
        }
        acc.into_iter()
            .map(|(k, (s, n))| (k, (s / n.max(1) as f64).sqrt()))
            .collect()
    }

    /// Minimizes the robust cost in place.
    pub fn solve(&mut self, options: &SolverOptions) -> Result<SolverReport, SolverError> {
        let layout = self.layout();
        if layout.dim == 0 {
            return Err(SolverError::InvalidArgument("no variable parameter blocks".into()));
        }
        let first = self.envelope(&layout);
        let mut state: Vec<Vec<f64>> = self.blocks.iter().map(|b| b.values.clone()).collect();
        let mut lambda = options.initial_damping;
        let mut lin = self.linearize(&state, &layout, &first, options)?;
        let initial_cost = lin.cost;
        let mut history = vec![initial_cost];
        let mut iterations = 0;
        let termination;
        loop {
            let grad_max = lin.gradient.iter().fold(0.0f64, |m, g| m.max(2.0 * g.abs()));
            if grad_max < options.gradient_tolerance || lin.cost == 0.0 {
                termination = Termination::GradientTolerance;
                break;
            }
            if iterations >= options.max_iterations {
                termination = Termination::MaxIterations;
                break;
            }
            iterations += 1;
            let diag: Vec<f64> = lin.hessian.diagonal().iter().map(|d| d.clamp(1e-6, 1e32)).collect();
            let neg_grad: Vec<f64> = lin.gradient.iter().map(|g| -g).collect();
            let mut try_undamped = options.gauss_newton_first;
            let mut accepted = None;
            loop {
                let damping = if try_undamped { 0.0 } else { lambda };
                let mut system = lin.hessian.clone();
                if damping > 0.0 {
                    let d: Vec<f64> = diag.iter().map(|v| v * damping).collect();
                    system.add_diagonal(&d);
                }
                let step = system.cholesky().map(|f| f.solve(&neg_grad));
                let outcome = step.and_then(|step| {
                    let candidate = self.apply_step(&state, &layout, &step);
                    let new_cost = self.cost_at(&candidate).ok()?;
                    Some((candidate, new_cost))
                });
                if let Some((candidate, new_cost)) = outcome {
                    if new_cost < lin.cost {
                        let delta = self.effective_step(&state, &candidate, &layout);
                        accepted = Some((candidate, new_cost, delta));
                        if damping > 0.0 {
                            lambda = (lambda * 0.5).max(1e-16);
                        }
                        break;
                    }
                }
                if try_undamped {
                    try_undamped = false;
                    continue;
                }
                lambda *= 10.0;
                if lambda > options.max_damping {
                    break;
                }
            }
            let Some((candidate, new_cost, delta)) = accepted else {
                termination = Termination::NoProgress;
                break;
            };
            let old_cost = lin.cost;
            let step_norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            let x_norm = state.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            state = candidate;
            history.push(new_cost);
            if (old_cost - new_cost) < options.function_tolerance * old_cost {
                lin.cost = new_cost;
                termination = Termination::FunctionTolerance;
                break;
            }
            if step_norm <= options.parameter_tolerance * (x_norm + options.parameter_tolerance) {
                lin.cost = new_cost;
                termination = Termination::ParameterTolerance;
                break;
            }
            lin = self.linearize(&state, &layout, &first, options)?;
        }
        for (b, v) in self.blocks.iter_mut().zip(&state) {
            b.values = v.clone();
        }
        let final_lin = self.linearize(&state, &layout, &first, options)?;
        let condition_estimate = final_lin
            .hessian
            .cholesky()
            .map(|f| f.condition_estimate())
            .unwrap_or(f64::INFINITY);
        Ok(SolverReport {
            initial_cost,
            final_cost: final_lin.cost,
            iterations,
            termination,
            cost_history: history,
            group_rms: self.group_rms(&state),
            residual_count: self.residuals.iter().map(|r| r.residual_dim()).sum(),
            condition_estimate,
        })
    }
}
