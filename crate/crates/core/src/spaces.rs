//! Strategy and parameter space geometry.
//!
//! Every solver in the crate keeps its iterates feasible by projecting onto a
//! [`Space`]: boxes and orthants clamp, simplices use the sort-and-threshold
//! projection, and products project factor by factor.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Membership tolerance used when checking feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Space {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{z >= 0 : sum(z) = scale}`
    Simplex { dim: usize, scale: f64 },
    NonnegativeOrthant { dim: usize },
    Product { factors: Vec<Space> },
}

impl Space {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let space = Space::Box { lower, upper };
        space.validate()?;
        Ok(space)
    }

    /// A box with the same bounds in every coordinate.
    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(vec![lower; dim], vec![upper; dim])
    }

    pub fn simplex(dim: usize, scale: f64) -> Result<Self> {
        let space = Space::Simplex { dim, scale };
        space.validate()?;
        Ok(space)
    }

    pub fn product(factors: Vec<Space>) -> Result<Self> {
        let space = Space::Product { factors };
        space.validate()?;
        Ok(space)
    }

    /// Checks the structural invariants. Deserialized spaces should be
    /// validated before use.
    pub fn validate(&self) -> Result<()> {
        match self {
            Space::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::InvalidSpace(format!(
                        "box bounds have lengths {} and {}",
                        lower.len(),
                        upper.len()
                    )));
                }
                for (k, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !(l <= u) || !l.is_finite() || !u.is_finite() {
                        return Err(Error::InvalidSpace(format!(
                            "box coordinate {k} has bounds [{l}, {u}]"
                        )));
                    }
                }
                Ok(())
            }
            Space::Simplex { dim, scale } => {
                if *dim == 0 || !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidSpace(format!(
                        "simplex needs dim > 0 and scale > 0, got ({dim}, {scale})"
                    )));
                }
                Ok(())
            }
            Space::NonnegativeOrthant { .. } => Ok(()),
            Space::Product { factors } => factors.iter().try_for_each(Space::validate),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Space::Box { lower, .. } => lower.len(),
            Space::Simplex { dim, .. } | Space::NonnegativeOrthant { dim } => *dim,
            Space::Product { factors } => factors.iter().map(Space::dim).sum(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            Space::Box { .. } | Space::Simplex { .. } => true,
            Space::NonnegativeOrthant { dim } => *dim == 0,
            Space::Product { factors } => factors.iter().all(Space::is_bounded),
        }
    }

    /// Euclidean projection of `z` onto the space.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = z.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn project_in_place(&self, z: &mut [f64]) -> Result<()> {
        Error::check_dim(self.dim(), z.len())?;
        self.project_unchecked(z);
        Ok(())
    }

    fn project_unchecked(&self, z: &mut [f64]) {
        match self {
            Space::Box { lower, upper } => {
                for ((v, l), u) in z.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(*l, *u);
                }
            }
            Space::NonnegativeOrthant { .. } => {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            Space::Simplex { scale, .. } => project_simplex(z, *scale),
            Space::Product { factors } => {
                let mut offset = 0;
                for factor in factors {
                    let d = factor.dim();
                    factor.project_unchecked(&mut z[offset..offset + d]);
                    offset += d;
                }
            }
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match self {
            Space::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            Space::NonnegativeOrthant { .. } => z.iter().all(|v| *v >= -tol),
            Space::Simplex { scale, .. } => {
                z.iter().all(|v| *v >= -tol) && (z.iter().sum::<f64>() - scale).abs() <= tol
            }
            Space::Product { factors } => {
                let mut offset = 0;
                factors.iter().all(|f| {
                    let d = f.dim();
                    let ok = f.contains(&z[offset..offset + d], tol);
                    offset += d;
                    ok
                })
            }
        }
    }

    /// Uniform draw: per-coordinate on boxes, exponential normalization on
    /// simplices.
    pub fn sample_uniform(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        if !self.is_bounded() {
            return Err(Error::Unbounded);
        }
        let mut out = Vec::with_capacity(self.dim());
        self.sample_into(rng, &mut out);
        Ok(out)
    }

    fn sample_into(&self, rng: &mut Rng, out: &mut Vec<f64>) {
        match self {
            Space::Box { lower, upper } => {
                for (l, u) in lower.iter().zip(upper) {
                    out.push(l + (u - l) * rng.uniform());
                }
            }
            Space::Simplex { dim, scale } => {
                let draws: Vec<f64> = (0..*dim).map(|_| rng.exponential()).collect();
                let total: f64 = draws.iter().sum();
                out.extend(draws.iter().map(|e| scale * e / total));
            }
            Space::NonnegativeOrthant { .. } => {}
            Space::Product { factors } => {
                for f in factors {
                    f.sample_into(rng, out);
                }
            }
        }
    }

    /// Midpoint of a box, barycenter of a simplex.
    pub fn center(&self) -> Result<Vec<f64>> {
        match self {
            Space::Box { lower, upper } => {
                Ok(lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect())
            }
            Space::Simplex { dim, scale } => Ok(vec![scale / *dim as f64; *dim]),
            Space::NonnegativeOrthant { .. } => Err(Error::Unbounded),
            Space::Product { factors } => {
                let mut out = Vec::with_capacity(self.dim());
                for f in factors {
                    out.extend(f.center()?);
                }
                Ok(out)
            }
        }
    }

    /// Length of the longest edge of the bounding box; used to scale step
    /// sizes of inner solvers.
    pub fn diameter(&self) -> f64 {
        match self {
            Space::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| u - l)
                .fold(0.0, f64::max),
            Space::Simplex { scale, .. } => *scale,
            Space::NonnegativeOrthant { .. } => f64::INFINITY,
            Space::Product { factors } => factors.iter().map(Space::diameter).fold(0.0, f64::max),
        }
    }
}

/// Sort-and-threshold projection onto `{z >= 0 : sum(z) = scale}`.
fn project_simplex(z: &mut [f64], scale: f64) {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - scale) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    for v in z.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
}

/// Seeded random stream.
///
/// Backed by ChaCha8, which is counter based: [`Rng::stream`] gives
/// independent, reproducible streams for parallel work keyed by index.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `index` under `seed`.
    pub fn stream(seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn exponential(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }

    /// Index drawn from the discrete distribution `probs`.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform() * probs.iter().sum::<f64>();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// SplitMix64 finalizer over `(master, index)`; derives per-instance seeds.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
