//! Synthetic densities with closed-form constants.
//!
//! Four families cover the harness's needs. The uniform families have
//! a positive density floor on a convex support, which the contraction
//! and ball-mass checkers need. The triangular and tapered families
//! are Lipschitz with known constants and vanish continuously at the
//! support boundary, which the flagging checker needs. Every family
//! samples exactly (inverse CDF or direct), evaluates exactly, and,
//! where implemented, integrates balls exactly, so no Monte-Carlo
//! estimate ever plays the role of ground truth.

use rand::Rng;

use super::geometry::Support;
use super::LabError;
use crate::knn::unit_ball_volume;
use crate::tensor_io::EmbeddingMatrix;

/// Lipschitz-style smoothness constants: `|f(x) - f(y)| <=
/// c_beta * |x - y|^beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderConstants {
    pub c_beta: f64,
    pub beta: f64,
}

/// Low-density mass constants: `P(f(X) <= t) <= c_eta * t^eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConstants {
    pub c_eta: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityFamily {
    UniformBall,
    UniformBox,
    Triangular1d,
    TaperBox,
}

impl DensityFamily {
    pub fn name(self) -> &'static str {
        match self {
            DensityFamily::UniformBall => "uniform-ball",
            DensityFamily::UniformBox => "uniform-box",
            DensityFamily::Triangular1d => "triangular-1d",
            DensityFamily::TaperBox => "taper-box",
        }
    }
}

impl std::fmt::Display for DensityFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A probability density with known support and known constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDensity {
    family: DensityFamily,
    support: Support,
    smoothness: Option<HolderConstants>,
    boundary: Option<BoundaryConstants>,
    min_density: Option<f64>,
}

impl SyntheticDensity {
    /// Constant density on a ball. Density floor `1/volume`; no
    /// smoothness constants (the boundary jump is discontinuous).
    pub fn uniform_ball(center: Vec<f64>, radius: f64) -> Result<Self, LabError> {
        let support = Support::ball(center, radius)?;
        let level = 1.0 / support.volume();
        let density = SyntheticDensity {
            family: DensityFamily::UniformBall,
            support,
            smoothness: None,
            boundary: Some(BoundaryConstants { c_eta: 1.0 / level, eta: 1.0 }),
            min_density: Some(level),
        };
        density.check_unit_integral()?;
        Ok(density)
    }

    /// Constant density on an axis-aligned box.
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, LabError> {
        let support = Support::rect(lo, hi)?;
        let level = 1.0 / support.volume();
        let density = SyntheticDensity {
            family: DensityFamily::UniformBox,
            support,
            smoothness: None,
            boundary: Some(BoundaryConstants { c_eta: 1.0 / level, eta: 1.0 }),
            min_density: Some(level),
        };
        density.check_unit_integral()?;
        Ok(density)
    }

    /// The tent density `f(x) = 4 min(x, 1 - x)` on `[0, 1]`: peak 2
    /// at the center, Lipschitz constant 4, and low-density mass
    /// `P(f <= t) = t^2 / 4 <= t / 2`.
    pub fn triangular_1d() -> Self {
        let support = Support::unit_box(1).expect("unit interval is valid");
        let density = SyntheticDensity {
            family: DensityFamily::Triangular1d,
            support,
            smoothness: Some(HolderConstants { c_beta: 4.0, beta: 1.0 }),
            boundary: Some(BoundaryConstants { c_eta: 0.5, eta: 1.0 }),
            min_density: None,
        };
        density.check_unit_integral().expect("tent density integrates to 1");
        density
    }

    /// Product of per-axis tent densities on a box: each axis `j`
    /// carries `(4/e_j) min(u_j, 1 - u_j)` in its box coordinate
    /// `u_j`, where `e_j` is the edge length. The gradient bound
    /// gives the Lipschitz constant `(2^{d+1}/V) sqrt(sum e_j^{-2})`
    /// with `V` the box volume.
    pub fn taper_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, LabError> {
        let support = Support::rect(lo, hi)?;
        let (d, volume) = (support.dim(), support.volume());
        let (lo, hi) = support.bounding_box();
        let inv_sq: f64 = lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(-2)).sum();
        let c_beta = 2f64.powi(d as i32 + 1) / volume * inv_sq.sqrt();
        let density = SyntheticDensity {
            family: DensityFamily::TaperBox,
            support,
            smoothness: Some(HolderConstants { c_beta, beta: 1.0 }),
            boundary: None,
            min_density: None,
        };
        density.check_unit_integral()?;
        Ok(density)
    }

    pub fn family(&self) -> DensityFamily {
        self.family
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn smoothness(&self) -> Option<HolderConstants> {
        self.smoothness
    }

    pub fn boundary(&self) -> Option<BoundaryConstants> {
        self.boundary
    }

    /// Density floor over the support, where one exists.
    pub fn min_density(&self) -> Option<f64> {
        self.min_density
    }

    /// Exact density at `x`; 0 outside the support.
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        if !self.support.contains(x) {
            return 0.0;
        }
        match self.family {
            DensityFamily::UniformBall | DensityFamily::UniformBox => 1.0 / self.support.volume(),
            DensityFamily::Triangular1d | DensityFamily::TaperBox => {
                let (lo, hi) = self.support.bounding_box();
                let mut f = 1.0;
                for ((v, l), h) in x.iter().zip(&lo).zip(&hi) {
                    let e = h - l;
                    let u = (v - l) / e;
                    f *= 4.0 / e * u.min(1.0 - u);
                }
                f
            }
        }
    }

    /// `n` i.i.d. samples. Uniform families sample their support
    /// directly; tent axes sample by inverse CDF. Deterministic for a
    /// given generator state.
    ///
    /// # Panics
    ///
    /// If `n` is 0.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> EmbeddingMatrix {
        assert!(n >= 1, "sample size must be positive");
        let d = self.dim();
        let mut values = Vec::with_capacity(n * d);
        match self.family {
            DensityFamily::UniformBall | DensityFamily::UniformBox => {
                for _ in 0..n {
                    values.extend(self.support.sample_uniform(rng));
                }
            }
            DensityFamily::Triangular1d | DensityFamily::TaperBox => {
                let (lo, hi) = self.support.bounding_box();
                for _ in 0..n {
                    for (l, h) in lo.iter().zip(&hi) {
                        values.push(l + (h - l) * tent_inverse_cdf(rng.random::<f64>()));
                    }
                }
            }
        }
        EmbeddingMatrix::new(n, d, values).expect("samples are finite and rectangular")
    }

    /// Whether [`Self::ball_mass`] has a closed form for this family
    /// and dimension.
    pub fn has_closed_form_ball_mass(&self) -> bool {
        match self.family {
            DensityFamily::UniformBall => true,
            DensityFamily::UniformBox => self.dim() <= 2,
            DensityFamily::Triangular1d => true,
            DensityFamily::TaperBox => self.dim() == 1,
        }
    }

    /// Exact probability mass of the closed ball at `center` with the
    /// given radius.
    ///
    /// # Errors
    ///
    /// `UnsupportedBallMass` where no closed form is implemented
    /// (boxes above dimension 2, tapered boxes above dimension 1).
    pub fn ball_mass(&self, center: &[f64], radius: f64) -> Result<f64, LabError> {
        debug_assert_eq!(center.len(), self.dim());
        debug_assert!(radius > 0.0);
        match self.family {
            DensityFamily::UniformBall | DensityFamily::UniformBox => {
                let overlap = self.support.ball_intersection_volume(center, radius)?;
                Ok(overlap / self.support.volume())
            }
            DensityFamily::Triangular1d | DensityFamily::TaperBox => {
                if self.dim() != 1 {
                    return Err(LabError::UnsupportedBallMass {
                        family: self.family.name(),
                        dim: self.dim(),
                    });
                }
                let (lo, hi) = self.support.bounding_box();
                let e = hi[0] - lo[0];
                let cdf = |x: f64| tent_cdf(((x - lo[0]) / e).clamp(0.0, 1.0));
                Ok(cdf(center[0] + radius) - cdf(center[0] - radius))
            }
        }
    }

    /// Numeric unit-integral check, run at construction for
    /// dimensions up to 3. Balls integrate radially; boxes use a
    /// tensor midpoint rule. Both routes go through [`Self::value`],
    /// so a wrong constant or a wrong membership test fails here.
    fn check_unit_integral(&self) -> Result<(), LabError> {
        let d = self.dim();
        if d > 3 {
            return Ok(());
        }
        let integral = match &self.support {
            Support::Ball { center, radius } => {
                let steps = 4096;
                let dv = unit_ball_volume(d) * d as f64;
                let dr = radius / steps as f64;
                let mut acc = 0.0;
                let mut probe = center.clone();
                for i in 0..steps {
                    let r = (i as f64 + 0.5) * dr;
                    probe[0] = center[0] + r;
                    acc += self.value(&probe) * dv * r.powi(d as i32 - 1) * dr;
                }
                acc
            }
            Support::Rect { lo, hi } => {
                let per_axis: usize = match d {
                    1 => 512,
                    2 => 64,
                    _ => 24,
                };
                let widths: Vec<f64> =
                    lo.iter().zip(hi).map(|(l, h)| (h - l) / per_axis as f64).collect();
                let cell: f64 = widths.iter().product();
                let mut acc = 0.0;
                let mut idx = vec![0usize; d];
                let mut x = vec![0.0; d];
                'grid: loop {
                    for j in 0..d {
                        x[j] = lo[j] + (idx[j] as f64 + 0.5) * widths[j];
                    }
                    acc += self.value(&x) * cell;
                    let mut j = 0;
                    loop {
                        idx[j] += 1;
                        if idx[j] < per_axis {
                            break;
                        }
                        idx[j] = 0;
                        j += 1;
                        if j == d {
                            break 'grid;
                        }
                    }
                }
                acc
            }
        };
        if (integral - 1.0).abs() <= 1e-3 {
            Ok(())
        } else {
            Err(LabError::SelfCheckFailed { integral })
        }
    }
}

/// CDF of the unit tent density `4 min(u, 1-u)` on `[0, 1]`.
fn tent_cdf(u: f64) -> f64 {
    if u <= 0.5 {
        2.0 * u * u
    } else {
        1.0 - 2.0 * (1.0 - u) * (1.0 - u)
    }
}

/// Inverse CDF of the unit tent density.
fn tent_inverse_cdf(p: f64) -> f64 {
    if p < 0.5 {
        (p / 2.0).sqrt()
    } else {
        1.0 - ((1.0 - p) / 2.0).sqrt()
    }
}
