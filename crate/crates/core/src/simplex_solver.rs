//! Zero finding for ψ on the level set `A_a` by Sperner labeling of
//! edgewise-refined simplices.
//!
//! Vertices are addressed by integer barycentric keys summing to `2^KEY_BITS`,
//! so midpoints are exact and vertices shared between cells hash identically.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{argmax, dist_inf, norm_inf};
use crate::radial_ode::{ExitOutcome, IntegrationControls};
use crate::systems::RadialSystem;
use crate::target_map::{evaluate_psi, g_from_target, pin_sum, SimplexLevel, TargetValue};

/// Keys sum to `2^KEY_BITS`; this bounds the reachable depth.
pub const KEY_BITS: u32 = 52;
const KEY_TOTAL: u64 = 1 << KEY_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Index(usize),
    /// ψ vanished at the vertex (its trajectory decayed below `psi_tol`).
    Root,
}

/// An `(L-1)`-simplex in `A_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexCell {
    pub vertices: Vec<Vec<f64>>,
    pub keys: Vec<Vec<u64>>,
    pub labels: Vec<Option<Label>>,
    pub depth: usize,
}

fn key_to_alpha(key: &[u64], a: f64) -> Vec<f64> {
    let mut alpha: Vec<f64> = key.iter().map(|&k| a * (k as f64 / KEY_TOTAL as f64)).collect();
    pin_sum(&mut alpha, a);
    alpha
}

impl SimplexCell {
    /// The whole level set as one cell, corners `a · e_j` in index order.
    pub fn root(level: &SimplexLevel) -> Self {
        let keys: Vec<Vec<u64>> = (0..level.l)
            .map(|j| {
                let mut k = vec![0u64; level.l];
                k[j] = KEY_TOTAL;
                k
            })
            .collect();
        Self::from_keys(keys, level.a, 0)
    }

    fn from_keys(keys: Vec<Vec<u64>>, a: f64, depth: usize) -> Self {
        let vertices = keys.iter().map(|k| key_to_alpha(k, a)).collect();
        let labels = vec![None; keys.len()];
        Self { vertices, keys, labels, depth }
    }

    fn level_a(&self) -> f64 {
        self.vertices[0].iter().sum()
    }

    /// Max-norm diameter.
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.vertices.len() {
            for j in i + 1..self.vertices.len() {
                d = d.max(dist_inf(&self.vertices[i], &self.vertices[j]));
            }
        }
        d
    }

    pub fn barycenter_key(&self) -> Vec<u64> {
        let l = self.keys[0].len();
        (0..l).map(|i| self.keys.iter().map(|k| k[i]).sum()).collect()
    }

    /// Barycenter of the vertices, pinned to the level.
    pub fn barycenter(&self, a: f64) -> Vec<f64> {
        let m = self.keys.len() as f64;
        let mut alpha: Vec<f64> =
            self.barycenter_key().iter().map(|&k| a * (k as f64 / (m * KEY_TOTAL as f64))).collect();
        pin_sum(&mut alpha, a);
        alpha
    }

    /// All labels present and pairwise distinct.
    pub fn is_completely_labeled(&self) -> bool {
        let l = self.labels.len();
        let mut seen = vec![false; l];
        for lab in &self.labels {
            match lab {
                Some(Label::Index(j)) if *j < l && !seen[*j] => seen[*j] = true,
                _ => return false,
            }
        }
        true
    }
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(d - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, d - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Order-2 edgewise subdivision into `2^(L-1)` children.
///
/// Points of the parent are written with half-integer barycentric weights
/// `c` (sum 2) and cumulative coordinates `s_j = c_j + … + c_d`, which live in
/// the region `2 ≥ s_1 ≥ … ≥ s_d ≥ 0`. The children are the Kuhn simplices
/// of the cube `[0, 2]^d` contained in that region.
pub fn subdivide(cell: &SimplexCell) -> Vec<SimplexCell> {
    let l = cell.keys.len();
    let d = l - 1;
    let a = cell.level_a();
    if d == 0 {
        let mut c = cell.clone();
        c.depth += 1;
        return vec![c];
    }
    let perms = permutations(d);
    let mut children = Vec::with_capacity(1 << d);
    for base in 0..(1u32 << d) {
        let b: Vec<u8> = (0..d).map(|j| ((base >> j) & 1) as u8).collect();
        for perm in &perms {
            let mut path = Vec::with_capacity(l);
            let mut x = b.clone();
            path.push(x.clone());
            for &j in perm {
                x[j] += 1;
                path.push(x.clone());
            }
            let inside = path.iter().all(|s| s[0] <= 2 && s.windows(2).all(|w| w[0] >= w[1]));
            if !inside {
                continue;
            }
            let keys: Vec<Vec<u64>> = path
                .iter()
                .map(|s| {
                    let mut c = vec![0u64; l];
                    c[0] = 2 - s[0] as u64;
                    for j in 1..d {
                        c[j] = (s[j - 1] - s[j]) as u64;
                    }
                    c[d] = s[d - 1] as u64;
                    let mut key = vec![0u64; l];
                    for (v, &cv) in c.iter().enumerate() {
                        for (kk, &pk) in key.iter_mut().zip(&cell.keys[v]) {
                            *kk += cv * pk;
                        }
                    }
                    key.iter().map(|k| k / 2).collect()
                })
                .collect();
            children.push(SimplexCell::from_keys(keys, a, cell.depth + 1));
        }
    }
    children
}

/// Knobs for [`solve_zero`]; unset values scale with the level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_depth: Option<usize>,
    pub psi_tol: Option<f64>,
    pub diam_tol: Option<f64>,
    /// Extra attempts with a larger `r_max` when ψ is unresolved.
    pub max_retries: usize,
    pub r_max_growth: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_depth: None, psi_tol: None, diam_tol: None, max_retries: 3, r_max_growth: 10.0 }
    }
}

/// [`SolverOptions`] with every default filled in for a given level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedOptions {
    pub max_depth: usize,
    pub psi_tol: f64,
    pub diam_tol: f64,
    pub max_retries: usize,
    pub r_max_growth: f64,
}

pub fn default_max_depth(l: usize) -> usize {
    match l {
        0..=2 => 40,
        3 => 18,
        4 => 12,
        _ => 8,
    }
}

impl SolverOptions {
    pub fn resolve(&self, level: &SimplexLevel) -> Result<ResolvedOptions> {
        let max_depth = self.max_depth.unwrap_or_else(|| default_max_depth(level.l));
        if max_depth as u32 > KEY_BITS {
            return Err(Error::InvalidParams(format!("max_depth must be <= {KEY_BITS}, got {max_depth}")));
        }
        let psi_tol = self.psi_tol.unwrap_or(1e-4 * level.a);
        // one halving below the depth-limited cell size, so the depth limit and
        // the diameter test agree
        let diam_tol = self.diam_tol.unwrap_or(level.a * 2f64.powi(1 - max_depth as i32));
        for (name, v) in [("psi_tol", psi_tol), ("diam_tol", diam_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.r_max_growth.is_finite() && self.r_max_growth > 1.0) {
            return Err(Error::InvalidParams(format!("r_max_growth must be > 1, got {}", self.r_max_growth)));
        }
        Ok(ResolvedOptions {
            max_depth,
            psi_tol,
            diam_tol,
            max_retries: self.max_retries,
            r_max_growth: self.r_max_growth,
        })
    }
}

/// ψ and its label at one point of `A_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexEval {
    pub alpha: Vec<f64>,
    pub label: Label,
    pub target: TargetValue,
    /// `|ψ|_inf`, or the terminal state norm for decayed trajectories.
    pub psi_norm: f64,
    /// Truncation radius that resolved ψ.
    pub r_max: f64,
    /// Integrations spent, including retries.
    pub integrations: usize,
}

fn label_of(alpha: &[f64], target: &TargetValue, level: &SimplexLevel, r_max: f64) -> Result<Label> {
    if target.outcome.is_global() {
        return Ok(Label::Root);
    }
    let g = g_from_target(alpha, target, level, r_max)?;
    let shift = level.a / level.l as f64;
    let h: Vec<f64> = g.iter().map(|x| x - shift).collect();
    Ok(Label::Index(argmax(&h)))
}

/// Evaluates ψ with the decay threshold capped at `psi_tol`, growing `r_max`
/// while the outcome stays undetermined.
pub fn evaluate_vertex(
    system: &RadialSystem,
    alpha: &[f64],
    level: &SimplexLevel,
    controls: &IntegrationControls,
    opts: &ResolvedOptions,
) -> Result<VertexEval> {
    let mut c = controls.clone();
    c.decay_eps = Some(controls.resolved_decay_eps(alpha).min(opts.psi_tol));
    let mut integrations = 0;
    loop {
        let target = evaluate_psi(system, alpha, &c)?;
        integrations += 1;
        if target.is_resolved() {
            let label = label_of(alpha, &target, level, c.r_max)?;
            let psi_norm = match &target.outcome {
                ExitOutcome::GlobalCandidate { state, .. } => norm_inf(state),
                _ => norm_inf(&target.value),
            };
            return Ok(VertexEval { alpha: alpha.to_vec(), label, target, psi_norm, r_max: c.r_max, integrations });
        }
        if integrations > opts.max_retries {
            return Err(Error::UnresolvedTarget { alpha: alpha.to_vec(), r_max: c.r_max });
        }
        c.r_max *= opts.r_max_growth;
    }
}

/// Sperner label of a point of `A_a`.
pub fn sperner_label(
    system: &RadialSystem,
    alpha: &[f64],
    level: &SimplexLevel,
    controls: &IntegrationControls,
    opts: &ResolvedOptions,
) -> Result<Label> {
    Ok(evaluate_vertex(system, alpha, level, controls, opts)?.label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RootVertex,
    Barycenter,
    Diameter,
    DepthLimit,
}

/// A located approximate zero of ψ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCertificate {
    pub alpha_star: Vec<f64>,
    pub cell: SimplexCell,
    pub diameter: f64,
    pub psi_norm: f64,
    pub evaluations: usize,
    pub depth: usize,
    pub termination: Termination,
    pub outcome: ExitOutcome,
    pub psi_tol: f64,
    pub diam_tol: f64,
}

/// One line of the solver trace: the cell accepted at a depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub depth: usize,
    pub vertices: Vec<Vec<f64>>,
    pub labels: Vec<Option<Label>>,
    pub psi_norms: Vec<f64>,
    pub barycenter: Vec<f64>,
    pub barycenter_psi_norm: f64,
    pub diameter: f64,
    pub completely_labeled_children: usize,
    pub evaluations: usize,
}

struct Labeler<'a> {
    system: &'a RadialSystem,
    level: SimplexLevel,
    controls: &'a IntegrationControls,
    opts: ResolvedOptions,
    vertices: HashMap<Vec<u64>, VertexEval>,
    barycenters: HashMap<Vec<u64>, VertexEval>,
    evaluations: AtomicUsize,
}

impl<'a> Labeler<'a> {
    fn eval(&self, alpha: &[f64]) -> Result<VertexEval> {
        let e = evaluate_vertex(self.system, alpha, &self.level, self.controls, &self.opts)?;
        self.evaluations.fetch_add(e.integrations, Ordering::Relaxed);
        Ok(e)
    }

    /// Labels every vertex of `cells` not yet in the memo, in parallel; each key is evaluated once.
    fn label_vertices(&mut self, cells: &mut [SimplexCell]) -> Result<()> {
        let mut pending: Vec<(Vec<u64>, Vec<f64>)> = Vec::new();
        for cell in cells.iter() {
            for (k, v) in cell.keys.iter().zip(&cell.vertices) {
                if !self.vertices.contains_key(k) && !pending.iter().any(|(pk, _)| pk == k) {
                    pending.push((k.clone(), v.clone()));
                }
            }
        }
        let results: Vec<Result<VertexEval>> = pending.par_iter().map(|(_, alpha)| self.eval(alpha)).collect();
        for ((k, _), r) in pending.into_iter().zip(results) {
            self.vertices.insert(k, r?);
        }
        for cell in cells.iter_mut() {
            for (lab, k) in cell.labels.iter_mut().zip(&cell.keys) {
                *lab = Some(self.vertices[k].label);
            }
        }
        Ok(())
    }

    fn label_barycenters(&mut self, cells: &[SimplexCell]) -> Result<()> {
        let a = self.level.a;
        let pending: Vec<(Vec<u64>, Vec<f64>)> = cells
            .iter()
            .map(|c| (c.barycenter_key(), c.barycenter(a)))
            .filter(|(k, _)| !self.barycenters.contains_key(k))
            .collect();
        let results: Vec<Result<VertexEval>> = pending.par_iter().map(|(_, alpha)| self.eval(alpha)).collect();
        for ((k, _), r) in pending.into_iter().zip(results) {
            self.barycenters.insert(k, r?);
        }
        Ok(())
    }

    fn bary(&self, cell: &SimplexCell) -> &VertexEval {
        &self.barycenters[&cell.barycenter_key()]
    }

    fn certificate(&self, cell: &SimplexCell, termination: Termination) -> RootCertificate {
        let bary = self.bary(cell);
        let star = match termination {
            Termination::Barycenter => bary,
            _ => {
                let mut best = bary;
                for k in &cell.keys {
                    let v = &self.vertices[k];
                    let better_root = v.label == Label::Root && best.label != Label::Root;
                    let same_kind = (v.label == Label::Root) == (best.label == Label::Root);
                    if better_root || (same_kind && v.psi_norm < best.psi_norm) {
                        best = v;
                    }
                }
                best
            }
        };
        RootCertificate {
            alpha_star: star.alpha.clone(),
            cell: cell.clone(),
            diameter: cell.diameter(),
            psi_norm: star.psi_norm,
            evaluations: self.evaluations.load(Ordering::Relaxed),
            depth: cell.depth,
            termination,
            outcome: star.target.outcome.clone(),
            psi_tol: self.opts.psi_tol,
            diam_tol: self.opts.diam_tol,
        }
    }

    fn trace(&self, cell: &SimplexCell, completely_labeled_children: usize) -> TraceRecord {
        let bary = self.bary(cell);
        TraceRecord {
            depth: cell.depth,
            vertices: cell.vertices.clone(),
            labels: cell.labels.clone(),
            psi_norms: cell.keys.iter().map(|k| self.vertices[k].psi_norm).collect(),
            barycenter: bary.alpha.clone(),
            barycenter_psi_norm: bary.psi_norm,
            diameter: cell.diameter(),
            completely_labeled_children,
            evaluations: self.evaluations.load(Ordering::Relaxed),
        }
    }
}

fn check_solver_inputs(system: &RadialSystem, level: &SimplexLevel) -> Result<()> {
    if system.dim() != level.l {
        return Err(Error::DimensionMismatch { len: level.l, expected: system.dim() });
    }
    SimplexLevel::new(level.a, level.l)?;
    Ok(())
}

/// Finds `α* ∈ A_a` with ψ(α*) ≈ 0.
pub fn solve_zero(
    system: &RadialSystem,
    level: &SimplexLevel,
    controls: &IntegrationControls,
    opts: &SolverOptions,
) -> Result<RootCertificate> {
    solve_zero_traced(system, level, controls, opts, &mut Vec::new())
}

/// [`solve_zero`] that also records the accepted cell at every depth.
///
/// Among completely-labeled children the one whose barycenter has the
/// smallest ψ-norm is refined first; if it has no completely-labeled child the
/// search backtracks to the next candidate.
pub fn solve_zero_traced(
    system: &RadialSystem,
    level: &SimplexLevel,
    controls: &IntegrationControls,
    opts: &SolverOptions,
    trace: &mut Vec<TraceRecord>,
) -> Result<RootCertificate> {
    check_solver_inputs(system, level)?;
    controls.validate()?;
    let opts = opts.resolve(level)?;
    let mut lab = Labeler {
        system,
        level: *level,
        controls,
        opts,
        vertices: HashMap::new(),
        barycenters: HashMap::new(),
        evaluations: AtomicUsize::new(0),
    };

    let mut root = [SimplexCell::root(level)];
    lab.label_vertices(&mut root)?;
    lab.label_barycenters(&root)?;
    let [mut current] = root;
    if let Some(cert) = root_vertex_certificate(&lab, &current) {
        return Ok(cert);
    }
    if !current.is_completely_labeled() {
        return Err(Error::NoCompletelyLabeledCell { depth: 0 });
    }
    let mut stack: Vec<(Vec<SimplexCell>, usize)> = Vec::new();
    let mut deepest_failure = 0;

    loop {
        if current.diameter() < opts.diam_tol {
            trace.push(lab.trace(&current, 0));
            return Ok(lab.certificate(&current, Termination::Diameter));
        }
        if lab.bary(&current).label == Label::Root {
            trace.push(lab.trace(&current, 0));
            return Ok(lab.certificate(&current, Termination::Barycenter));
        }
        if current.depth >= opts.max_depth {
            trace.push(lab.trace(&current, 0));
            let best = lab.certificate(&current, Termination::DepthLimit);
            return Err(Error::DepthExhausted { depth: current.depth, best: Box::new(best) });
        }

        let mut children = subdivide(&current);
        lab.label_vertices(&mut children)?;
        if let Some(cert) = children.iter().find_map(|c| root_vertex_certificate(&lab, c)) {
            trace.push(lab.trace(&current, 0));
            return Ok(cert);
        }
        let mut candidates: Vec<SimplexCell> = children.into_iter().filter(|c| c.is_completely_labeled()).collect();
        lab.label_barycenters(&candidates)?;
        candidates.sort_by(|x, y| {
            lab.bary(x).psi_norm.total_cmp(&lab.bary(y).psi_norm).then_with(|| x.keys.cmp(&y.keys))
        });
        trace.push(lab.trace(&current, candidates.len()));
        if candidates.is_empty() {
            deepest_failure = deepest_failure.max(current.depth + 1);
        }
        stack.push((candidates, 0));

        current = loop {
            let Some((cands, next)) = stack.last_mut() else {
                return Err(Error::NoCompletelyLabeledCell { depth: deepest_failure });
            };
            if *next < cands.len() {
                *next += 1;
                break cands[*next - 1].clone();
            }
            stack.pop();
        };
    }
}

fn root_vertex_certificate(lab: &Labeler<'_>, cell: &SimplexCell) -> Option<RootCertificate> {
    cell.labels.contains(&Some(Label::Root))
        .then(|| lab.certificate(cell, Termination::RootVertex))
}

/// Every cell of the full depth-`depth` subdivision with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingSummary {
    pub depth: usize,
    pub cells: usize,
    pub vertices: usize,
    pub completely_labeled: usize,
    pub root_vertices: usize,
    pub boundary_vertices: usize,
    /// Boundary vertices carrying the label of one of their zero coordinates,
    /// or corners not carrying their own index.
    pub sperner_violations: Vec<Vec<f64>>,
    pub evaluations: usize,
}

/// Labels the full subdivision of `A_a` at one depth.
pub fn full_labeling(
    system: &RadialSystem,
    level: &SimplexLevel,
    controls: &IntegrationControls,
    opts: &SolverOptions,
    depth: usize,
) -> Result<LabelingSummary> {
    check_solver_inputs(system, level)?;
    controls.validate()?;
    let opts = opts.resolve(level)?;
    let mut cells = vec![SimplexCell::root(level)];
    for _ in 0..depth {
        cells = cells.iter().flat_map(subdivide).collect();
    }
    let mut lab = Labeler {
        system,
        level: *level,
        controls,
        opts,
        vertices: HashMap::new(),
        barycenters: HashMap::new(),
        evaluations: AtomicUsize::new(0),
    };
    lab.label_vertices(&mut cells)?;

    let mut boundary_vertices = 0;
    let mut root_vertices = 0;
    let mut sperner_violations = Vec::new();
    let mut keys: Vec<&Vec<u64>> = lab.vertices.keys().collect();
    keys.sort();
    for k in keys {
        let v = &lab.vertices[k];
        if v.label == Label::Root {
            root_vertices += 1;
        }
        if k.contains(&0) {
            boundary_vertices += 1;
            let bad = match v.label {
                Label::Index(j) => k[j] == 0 || (k.iter().filter(|&&x| x > 0).count() == 1 && k[j] != KEY_TOTAL),
                Label::Root => true,
            };
            if bad {
                sperner_violations.push(v.alpha.clone());
            }
        }
    }
    Ok(LabelingSummary {
        depth,
        cells: cells.len(),
        vertices: lab.vertices.len(),
        completely_labeled: cells.iter().filter(|c| c.is_completely_labeled()).count(),
        root_vertices,
        boundary_vertices,
        sperner_violations,
        evaluations: lab.evaluations.load(Ordering::Relaxed),
    })
}
