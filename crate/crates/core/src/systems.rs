//! Concrete radial systems: the polyharmonic Lane-Emden system reduced to a
//! second-order chain, the scalar polyharmonic equation, and a small registry
//! of compiled-in custom nonlinearities.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonlinearity `F: R₊ᴸ → R₊ᴸ`. Implementations must be stateless and
/// reentrant; the integrator calls them concurrently from many threads.
pub trait Nonlinearity: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64], out: &mut [f64]);
}

/// Each component is a single power of one source component:
/// `f_i(w) = w_{src(i)}^{exp(i)}`.
#[derive(Debug, Clone)]
pub struct PowerChain {
    terms: Vec<(usize, f64)>,
}

impl PowerChain {
    pub fn new(terms: Vec<(usize, f64)>) -> Self {
        Self { terms }
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms
    }
}

#[inline]
fn power(base: f64, exponent: f64) -> f64 {
    if exponent == 1.0 {
        base
    } else {
        base.powf(exponent)
    }
}

impl Nonlinearity for PowerChain {
    fn dim(&self) -> usize {
        self.terms.len()
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        for (o, &(src, e)) in out.iter_mut().zip(&self.terms) {
            *o = power(u[src], e);
        }
    }
}

/// Wraps a closure as a nonlinearity.
pub struct FnNonlinearity<F> {
    dim: usize,
    f: F,
}

impl<F> FnNonlinearity<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Nonlinearity for FnNonlinearity<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        (self.f)(u, out)
    }
}

/// The radial problem `u_i'' + (n-1)/r u_i' = -f_i(u)` in space dimension `n`.
#[derive(Clone)]
pub struct RadialSystem {
    name: String,
    n: usize,
    f: Arc<dyn Nonlinearity>,
    labels: Vec<String>,
    nondegenerate_claimed: bool,
}

impl fmt::Debug for RadialSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("dim", &self.dim())
            .field("labels", &self.labels)
            .field("nondegenerate_claimed", &self.nondegenerate_claimed)
            .finish()
    }
}

impl RadialSystem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        f: Arc<dyn Nonlinearity>,
        labels: Vec<String>,
        nondegenerate_claimed: bool,
    ) -> Result<Self> {
        let dim = f.dim();
        if dim == 0 {
            return Err(Error::InvalidParams("system must have at least one component".into()));
        }
        if n == 0 {
            return Err(Error::InvalidParams("space dimension n must be positive".into()));
        }
        if labels.len() != dim {
            return Err(Error::InvalidParams(format!(
                "{} labels for a {dim}-component system",
                labels.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            f,
            labels,
            nondegenerate_claimed,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of components `L`.
    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// Space dimension `n`.
    pub fn space_dim(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn nondegenerate_claimed(&self) -> bool {
        self.nondegenerate_claimed
    }

    /// Raw evaluation; no finiteness check.
    #[inline]
    pub fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        self.f.eval(u, out)
    }

    /// Evaluates `F(u)`, failing on any non-finite output.
    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.f.eval(u, &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFiniteRhs(u.to_vec()))
        }
    }
}

/// Parameters of `(-Δ)^k u = v^p`, `(-Δ)^k v = u^q` in `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneEmdenParams {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub q: f64,
}

impl LaneEmdenParams {
    pub fn new(n: usize, k: usize, p: f64, q: f64) -> Self {
        Self { n, k, p, q }
    }

    pub fn scalar(n: usize, k: usize, p: f64) -> Self {
        Self { n, k, p, q: p }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("polyharmonic order k must be >= 1".into()));
        }
        if self.n <= 2 * self.k {
            return Err(Error::InvalidParams(format!(
                "need n > 2k, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        for (name, e) in [("p", self.p), ("q", self.q)] {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::InvalidParams(format!("exponent {name} must be > 0, got {e}")));
            }
        }
        Ok(())
    }
}

fn iterated_labels(var: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (0..k).map(move |i| match i {
        0 => var.to_string(),
        1 => format!("-lap {var}"),
        _ => format!("(-lap)^{i} {var}"),
    })
}

/// The `2k`-component chain obtained from `w_i = (-Δ)^{i-1} u`,
/// `w_{k+i} = (-Δ)^{i-1} v`:
/// `F(w) = (w_2, …, w_k, w_{k+1}^p, w_{k+2}, …, w_{2k}, w_1^q)`.
pub fn lane_emden_system(params: LaneEmdenParams) -> Result<RadialSystem> {
    params.validate()?;
    let k = params.k;
    let l = 2 * k;
    let terms = (0..l)
        .map(|i| {
            if i == k - 1 {
                (k, params.p)
            } else if i == l - 1 {
                (0, params.q)
            } else {
                (i + 1, 1.0)
            }
        })
        .collect();
    let labels = iterated_labels("u", k).chain(iterated_labels("v", k)).collect();
    RadialSystem::new(
        format!("lane-emden(n={}, k={}, p={}, q={})", params.n, k, params.p, params.q),
        params.n,
        Arc::new(PowerChain::new(terms)),
        labels,
        true,
    )
}

/// The `k`-component chain for `(-Δ)^k u = u^p`:
/// `F(w) = (w_2, …, w_k, w_1^p)`.
pub fn scalar_polyharmonic_system(n: usize, k: usize, p: f64) -> Result<RadialSystem> {
    let params = LaneEmdenParams::scalar(n, k, p);
    params.validate()?;
    let terms = (0..k)
        .map(|i| if i + 1 == k { (0, p) } else { (i + 1, 1.0) })
        .collect();
    RadialSystem::new(
        format!("scalar-poly(n={n}, k={k}, p={p})"),
        n,
        Arc::new(PowerChain::new(terms)),
        iterated_labels("u", k).collect(),
        true,
    )
}

/// Two uncoupled copies of `-Δu = u^p`; degenerate.
pub fn decoupled_system(n: usize, p: f64) -> Result<RadialSystem> {
    LaneEmdenParams::scalar(n, 1, p).validate()?;
    RadialSystem::new(
        format!("decoupled(n={n}, p={p})"),
        n,
        Arc::new(PowerChain::new(vec![(0, p), (1, p)])),
        vec!["u1".into(), "u2".into()],
        false,
    )
}

/// The `k = 1` Lane-Emden pair with a third, linearly coupled component:
/// `F(u) = (u_2^p, u_1^q + u_3, u_1)`.
pub fn lane_emden_linear_system(n: usize, p: f64, q: f64) -> Result<RadialSystem> {
    LaneEmdenParams::new(n, 1, p, q).validate()?;
    let f = FnNonlinearity::new(3, move |u: &[f64], out: &mut [f64]| {
        out[0] = power(u[1], p);
        out[1] = power(u[0], q) + u[2];
        out[2] = u[0];
    });
    RadialSystem::new(
        format!("lane-emden-linear(n={n}, p={p}, q={q})"),
        n,
        Arc::new(f),
        vec!["u".into(), "v".into(), "w".into()],
        true,
    )
}

/// A compiled-in system addressable by name.
pub struct RegistryEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub build: fn(&LaneEmdenParams) -> Result<RadialSystem>,
}

static REGISTRY: &[RegistryEntry] = &[
    RegistryEntry {
        name: "lane-emden",
        description: "(-lap)^k u = v^p, (-lap)^k v = u^q as a 2k-component chain",
        build: |p| lane_emden_system(*p),
    },
    RegistryEntry {
        name: "scalar-poly",
        description: "(-lap)^k u = u^p as a k-component chain",
        build: |p| scalar_polyharmonic_system(p.n, p.k, p.p),
    },
    RegistryEntry {
        name: "decoupled",
        description: "two uncoupled copies of -lap u = u^p (degenerate)",
        build: |p| decoupled_system(p.n, p.p),
    },
    RegistryEntry {
        name: "lane-emden-linear",
        description: "(u2^p, u1^q + u3, u1): k = 1 Lane-Emden pair plus a linear component",
        build: |p| lane_emden_linear_system(p.n, p.p, p.q),
    },
];

pub fn registry() -> &'static [RegistryEntry] {
    REGISTRY
}

pub fn build_named(name: &str, params: &LaneEmdenParams) -> Result<RadialSystem> {
    let entry = REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::InvalidParams(format!("unknown system '{name}'")))?;
    (entry.build)(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: Vec<f64>,
    /// Indices set to zero on this stratum.
    pub zeroed: Vec<usize>,
    /// Sum of the zeroed components of F at `point`.
    pub inward_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub strata: usize,
    pub samples_per_stratum: usize,
    pub violations: Vec<Violation>,
}

impl NondegeneracyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples every proper boundary stratum of `R₊ᴸ` (some but not all
/// components zero) and records each point where the zeroed components of
/// `F` fail to push inward. Positive components are log-uniform in
/// `[1e-6, 1e2]`.
pub fn check_nondegenerate(system: &RadialSystem, samples: usize, seed: u64) -> NondegeneracyReport {
    let l = system.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (1e-6f64.ln(), 1e2f64.ln());
    let mut violations = Vec::new();
    let mut strata = 0;
    let mut point = vec![0.0; l];
    let mut out = vec![0.0; l];
    // mask bit i set => component i zeroed; exclude the empty and full masks
    for mask in 1u64..(1u64 << l) - 1 {
        strata += 1;
        let zeroed: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        for _ in 0..samples {
            for (i, x) in point.iter_mut().enumerate() {
                *x = if mask >> i & 1 == 1 {
                    0.0
                } else {
                    rng.gen_range(lo..hi).exp()
                };
            }
            system.eval_into(&point, &mut out);
            let inward: f64 = zeroed.iter().map(|&i| out[i]).sum();
            // a NaN sum is a violation too
            if inward.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                violations.push(Violation {
                    point: point.clone(),
                    zeroed: zeroed.clone(),
                    inward_sum: inward,
                });
            }
        }
    }
    NondegeneracyReport {
        strata,
        samples_per_stratum: samples,
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub regime: Regime,
    pub lhs: f64,
    pub rhs: f64,
    pub scalar_threshold: Option<f64>,
}

/// Classifies `1/(p+1) + 1/(q+1)` against `(n-2k)/n`.
pub fn criticality(params: &LaneEmdenParams) -> Result<CriticalityReport> {
    params.validate()?;
    let (n, k) = (params.n as f64, params.k as f64);
    let lhs = 1.0 / (params.p + 1.0) + 1.0 / (params.q + 1.0);
    let rhs = (n - 2.0 * k) / n;
    let regime = if (lhs - rhs).abs() < 1e-12 {
        Regime::Critical
    } else if lhs > rhs {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    };
    let scalar_threshold = (params.p == params.q).then(|| (n + 2.0 * k) / (n - 2.0 * k));
    Ok(CriticalityReport {
        regime,
        lhs,
        rhs,
        scalar_threshold,
    })
}
