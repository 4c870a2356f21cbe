use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::dop853::DenseSegment;
use crate::error::{Error, Result};

/// One stored node of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub r: f64,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
}

/// Accepted-step nodes plus the continuous extension between them.
///
/// `segments[j]` covers `[samples[j].r, samples[j + 1].r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    n: usize,
    samples: Vec<Sample>,
    segments: Vec<DenseSegment>,
    wall_hit: Option<usize>,
}

impl Trajectory {
    pub(crate) fn from_boundary(n: usize, alpha: &[f64]) -> Self {
        Self::from_seed(n, 0.0, alpha.to_vec(), vec![0.0; alpha.len()])
    }

    pub(crate) fn from_seed(n: usize, r: f64, u: Vec<f64>, du: Vec<f64>) -> Self {
        Self { n, samples: vec![Sample { r, u, du }], segments: Vec::new(), wall_hit: None }
    }

    pub(crate) fn mark_wall_hit(&mut self, i0: usize) {
        self.wall_hit = Some(i0);
    }

    /// Index of the component that reached zero, when the trajectory ends on the wall.
    pub fn wall_hit(&self) -> Option<usize> {
        self.wall_hit
    }

    pub(crate) fn push(&mut self, seg: DenseSegment, r: f64, u: Vec<f64>, du: Vec<f64>) {
        self.segments.push(seg);
        self.samples.push(Sample { r, u, du });
    }

    pub fn space_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.samples[0].u.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn segments(&self) -> &[DenseSegment] {
        &self.segments
    }

    pub fn r_start(&self) -> f64 {
        self.samples[0].r
    }

    pub fn r_end(&self) -> f64 {
        self.samples[self.samples.len() - 1].r
    }

    fn locate(&self, r: f64) -> Result<std::result::Result<usize, usize>> {
        let (lo, hi) = (self.r_start(), self.r_end());
        if !(r >= lo && r <= hi) {
            return Err(Error::OutOfRange { r, lo, hi });
        }
        // Ok(node index) on exact hit, Err(segment index) otherwise
        Ok(self.samples.binary_search_by(|s| s.r.total_cmp(&r)).map_err(|pos| pos - 1))
    }

    /// Interpolated `(u, u')` at `r`; stored nodes are returned verbatim.
    pub fn sample_state(&self, r: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match self.locate(r)? {
            Ok(i) => Ok((self.samples[i].u.clone(), self.samples[i].du.clone())),
            Err(j) => {
                let l = self.dim();
                let mut buf = vec![0.0; 2 * l];
                self.segments[j].eval(r, &mut buf);
                let du = buf.split_off(l);
                Ok((buf, du))
            }
        }
    }

    /// `u''` at `r` from the derivative of the interpolated `u'`.
    pub fn second_derivative(&self, r: f64) -> Result<Vec<f64>> {
        let j = match self.locate(r)? {
            Ok(i) if i == 0 && self.segments.is_empty() => {
                return Err(Error::OutOfRange { r, lo: self.r_start(), hi: self.r_end() })
            }
            Ok(i) => i.min(self.segments.len() - 1),
            Err(j) => j,
        };
        let l = self.dim();
        let mut buf = vec![0.0; 2 * l];
        self.segments[j].eval_derivative(r, &mut buf);
        Ok(buf.split_off(l))
    }

    /// Largest rise of any component above its running minimum over the stored nodes.
    pub fn monotonicity_drift(&self) -> f64 {
        let l = self.dim();
        let mut worst = 0.0f64;
        for i in 0..l {
            let mut running = f64::INFINITY;
            for s in &self.samples {
                worst = worst.max(s.u[i] - running);
                running = running.min(s.u[i]);
            }
        }
        worst
    }

    /// Largest rise of the flux `r^(n-1) u_i'` above its running minimum,
    /// divided by `r^(n-1)` at the offending node.
    pub fn flux_drift(&self) -> f64 {
        let l = self.dim();
        let e = self.n as i32 - 1;
        let mut worst = 0.0f64;
        for i in 0..l {
            let mut running = f64::INFINITY;
            for s in &self.samples {
                let w = s.r.powi(e);
                let flux = w * s.du[i];
                if w > 0.0 {
                    worst = worst.max((flux - running) / w);
                }
                running = running.min(flux);
            }
        }
        worst
    }

    /// CSV with header `r,u1..uL,du1..duL`, one row per node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let l = self.dim();
        let mut header = vec!["r".to_string()];
        header.extend((1..=l).map(|i| format!("u{i}")));
        header.extend((1..=l).map(|i| format!("du{i}")));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            write!(w, "{:.16e}", s.r)?;
            for v in s.u.iter().chain(&s.du) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
