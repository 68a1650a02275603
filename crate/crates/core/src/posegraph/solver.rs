//! Damped Gauss-Newton over the free keyframe poses.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Matrix3, SMatrix, Vector6};
use serde::{Deserialize, Serialize};

use super::residual::{edge_residuals, SolverConfig};
use super::sparse::{SparseCholesky, SparseSymmetric, Symbolic};
use super::PoseGraph;
use crate::{Error, Result};

type Mat6 = SMatrix<f64, 6, 6>;
type Mat36 = SMatrix<f64, 3, 6>;

fn skew(v: &crate::geometry::Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Linearized system `H δ = −g` in the free-pose variables.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub hessian: SparseSymmetric,
    pub gradient: Vec<f64>,
    pub cost: f64,
    /// Keyframe id of each 6-variable block.
    pub free: Vec<usize>,
    pub residuals: usize,
}

impl NormalEquations {
    /// Damped step `(H + λ·diag(H)) δ = −g` by sparse Cholesky.
    pub fn solve(&self, lambda: f64) -> Result<Vec<f64>> {
        let shift: Vec<f64> = self.hessian.diagonal().iter().map(|d| lambda * d.max(1e-12)).collect();
        let h = self.hessian.with_diagonal_shift(&shift);
        let chol = SparseCholesky::factor(&h)?;
        let neg: Vec<f64> = self.gradient.iter().map(|g| -g).collect();
        Ok(chol.solve(&neg))
    }
}

pub(crate) fn total_cost(graph: &PoseGraph, cfg: &SolverConfig) -> (f64, usize) {
    let kfs = graph.keyframes();
    let mut cost = 0.0;
    let mut count = 0;
    for e in graph.edges() {
        for r in edge_residuals(&kfs[e.i], &kfs[e.j], e, cfg) {
            cost += r.cost;
            count += 1;
        }
    }
    (cost, count)
}

/// Free nodes in id order, after checking each is tied to a fixed node by
/// edges carrying at least one active residual.
fn free_nodes(graph: &PoseGraph, cfg: &SolverConfig) -> Result<Vec<usize>> {
    let n = graph.len();
    let kfs = graph.keyframes();
    let mut adj = vec![Vec::new(); n];
    for e in graph.edges() {
        if !edge_residuals(&kfs[e.i], &kfs[e.j], e, cfg).is_empty() {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| graph.is_fixed(i)).collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(bad) = (0..n).find(|&i| !seen[i]) {
        return Err(Error::DisconnectedGraph(bad));
    }
    Ok((0..n).filter(|&i| !graph.is_fixed(i)).collect())
}

pub fn normal_equations(graph: &PoseGraph, cfg: &SolverConfig) -> Result<NormalEquations> {
    cfg.validate()?;
    let free = free_nodes(graph, cfg)?;
    let mut slot = vec![None; graph.len()];
    for (k, &id) in free.iter().enumerate() {
        slot[id] = Some(k);
    }
    let kfs = graph.keyframes();
    let mut blocks: BTreeMap<(usize, usize), Mat6> = BTreeMap::new();
    for k in 0..free.len() {
        blocks.insert((k, k), Mat6::zeros());
    }
    let mut gradient = vec![0.0; 6 * free.len()];
    let mut cost = 0.0;
    let mut residuals = 0;
    for e in graph.edges() {
        let (si, sj) = (slot[e.i], slot[e.j]);
        let rt = kfs[e.i].pose.rotation_matrix().transpose();
        let res = edge_residuals(&kfs[e.i], &kfs[e.j], e, cfg);
        let mut hii = Mat6::zeros();
        let mut hjj = Mat6::zeros();
        let mut hij = Mat6::zeros();
        let mut gi = Vector6::zeros();
        let mut gj = Vector6::zeros();
        for r in &res {
            cost += r.cost;
            residuals += 1;
            let s = 1.0 / r.weight;
            let a = rt * skew(&r.y) * s;
            let mut jj = Mat36::zeros();
            jj.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
            jj.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-rt * s));
            let ji = -jj;
            let wr = r.robust;
            hii += ji.transpose() * ji * wr;
            hjj += jj.transpose() * jj * wr;
            hij += ji.transpose() * jj * wr;
            gi += ji.transpose() * r.scaled * wr;
            gj += jj.transpose() * r.scaled * wr;
        }
        if res.is_empty() {
            continue;
        }
        if let Some(a) = si {
            *blocks.get_mut(&(a, a)).unwrap() += hii;
            for d in 0..6 {
                gradient[6 * a + d] += gi[d];
            }
        }
        if let Some(b) = sj {
            *blocks.get_mut(&(b, b)).unwrap() += hjj;
            for d in 0..6 {
                gradient[6 * b + d] += gj[d];
            }
        }
        if let (Some(a), Some(b)) = (si, sj) {
            let (key, m) = if a < b { ((a, b), hij) } else { ((b, a), hij.transpose()) };
            *blocks.entry(key).or_insert_with(Mat6::zeros) += m;
        }
    }
    let hessian = SparseSymmetric::from_blocks(free.len(), &blocks)?;
    Ok(NormalEquations { hessian, gradient, cost, free, residuals })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    /// Cost after every accepted iteration, starting with the initial cost.
    pub costs: Vec<f64>,
    pub residuals: usize,
}

fn apply_step(graph: &mut PoseGraph, free: &[usize], step: &[f64]) {
    for (k, &id) in free.iter().enumerate() {
        let d = Vector6::from_column_slice(&step[6 * k..6 * k + 6]);
        let kf = graph.keyframe_mut(id);
        kf.pose = kf.pose.left_update(&d);
    }
}

/// Minimizes the robust cost over non-fixed poses in place. Diffusion and
/// anchored keyframes are never written.
pub fn optimize(graph: &mut PoseGraph, cfg: &SolverConfig) -> Result<OptimizeReport> {
    cfg.validate()?;
    let (initial_cost, count) = total_cost(graph, cfg);
    if count == 0 {
        return Ok(OptimizeReport { initial_cost, final_cost: initial_cost, iterations: 0, costs: vec![initial_cost], residuals: 0 });
    }
    let mut lambda = cfg.lm_lambda0;
    let mut cost = initial_cost;
    let mut costs = vec![cost];
    let mut iterations = 0;
    let mut symbolic: Option<Symbolic> = None;
    while iterations < cfg.max_iters {
        iterations += 1;
        let ne = normal_equations(graph, cfg)?;
        if ne.free.is_empty() || cost == 0.0 {
            break;
        }
        let sym = symbolic.get_or_insert_with(|| Symbolic::analyze(&ne.hessian));
        let diag = ne.hessian.diagonal();
        let neg: Vec<f64> = ne.gradient.iter().map(|g| -g).collect();
        let mut accepted = false;
        let mut factored = false;
        while lambda <= cfg.lm_lambda_max {
            let shift: Vec<f64> = diag.iter().map(|d| lambda * d.max(1e-12)).collect();
            let h = ne.hessian.with_diagonal_shift(&shift);
            let chol = match SparseCholesky::factor_with(&h, sym) {
                Ok(c) => c,
                Err(_) => {
                    lambda *= cfg.lm_factor;
                    continue;
                }
            };
            factored = true;
            let step = chol.solve(&neg);
            let mut trial = graph.clone();
            apply_step(&mut trial, &ne.free, &step);
            let (new_cost, _) = total_cost(&trial, cfg);
            if new_cost <= cost {
                *graph = trial;
                lambda = (lambda / cfg.lm_factor).max(1e-15);
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                cost = new_cost;
                costs.push(cost);
                accepted = true;
                let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if rel < cfg.rel_tol || step_norm < 1e-12 {
                    return Ok(OptimizeReport { initial_cost, final_cost: cost, iterations, costs, residuals: count });
                }
                break;
            }
            lambda *= cfg.lm_factor;
        }
        if !accepted {
            if !factored {
                return Err(Error::SingularSystem);
            }
            break;
        }
    }
    Ok(OptimizeReport { initial_cost, final_cost: cost, iterations, costs, residuals: count })
}
