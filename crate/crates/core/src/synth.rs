//! Synthetic datasets on the unit sphere with planted profile structure.
//!
//! Each profile is drawn from a von Mises-Fisher distribution. Higher
//! concentration gives a denser profile. In the strong mode every profile center
//! sits a small angle away from the best profile's center, so diffuse profiles end
//! up closer to the best profile than to themselves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::simindex::{dot, norm};

/// Profile sizes used by the default configuration.
pub const DEFAULT_SIZES: [usize; 6] = [131, 91, 103, 106, 112, 126];

/// Concentrations for the default 768-dimensional configuration. In high
/// dimension the mean resultant length is roughly `kappa / (d/2 + sqrt(d^2/4 + kappa^2))`,
/// so these give within-profile cosines from about 0.92 down to 0.76.
pub const DEFAULT_KAPPAS: [f64; 6] = [9400.0, 6800.0, 5300.0, 4300.0, 3600.0, 2700.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Profile centers drawn uniformly on the sphere.
    IndependentCenters,
    /// Profile 1 at a fixed pole, the others at growing angles from it.
    #[default]
    StrongAkp,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "independent_centers" | "independent" => Ok(Mode::IndependentCenters),
            "strong_akp" | "strong" => Ok(Mode::StrongAkp),
            other => Err(Error::InvalidParameter(format!("unknown synth mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_per_profile: Vec<usize>,
    pub dim: usize,
    pub concentrations: Vec<f64>,
    pub mode: Mode,
    /// Angle in radians between the best and worst profile centers.
    pub center_spread: f64,
    /// Fraction of `center_spread` at which profile 2 sits; later profiles move
    /// linearly out to the full spread.
    pub near_fraction: f64,
    pub seed: u64,
    /// Reject concentrations that increase with profile index.
    pub require_non_increasing: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_profile: DEFAULT_SIZES.to_vec(),
            dim: 768,
            concentrations: DEFAULT_KAPPAS.to_vec(),
            mode: Mode::StrongAkp,
            center_spread: 0.3,
            near_fraction: 0.7,
            seed: 42,
            require_non_increasing: true,
        }
    }
}

impl SynthConfig {
    pub fn k(&self) -> usize {
        self.n_per_profile.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_per_profile.is_empty() {
            return bad("at least one profile is required".into());
        }
        if self.concentrations.len() != self.n_per_profile.len() {
            return bad(format!(
                "{} sizes but {} concentrations",
                self.n_per_profile.len(),
                self.concentrations.len()
            ));
        }
        if self.n_per_profile.contains(&0) {
            return bad("profile sizes must be positive".into());
        }
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        if let Some(k) = self.concentrations.iter().find(|&&k| !(k > 0.0 && k.is_finite())) {
            return bad(format!("concentrations must be positive and finite, got {k}"));
        }
        if self.require_non_increasing && self.concentrations.windows(2).any(|w| w[1] > w[0]) {
            return bad("concentrations must be non-increasing".into());
        }
        if self.mode == Mode::StrongAkp
            && !(self.center_spread > 0.0 && self.center_spread < std::f64::consts::PI)
        {
            return bad(format!("center_spread must lie in (0, pi), got {}", self.center_spread));
        }
        if !(self.near_fraction > 0.0 && self.near_fraction <= 1.0) {
            return bad(format!("near_fraction must lie in (0, 1], got {}", self.near_fraction));
        }
        Ok(())
    }

    /// Angle of profile `i` (1-based) from profile 1 in strong mode.
    pub fn center_angle(&self, i: usize) -> f64 {
        let k = self.k();
        let g = match i {
            0 | 1 => 0.0,
            _ if k <= 2 => 1.0,
            _ => self.near_fraction + (1.0 - self.near_fraction) * (i - 2) as f64 / (k - 2) as f64,
        };
        self.center_spread * g
    }
}

fn gaussian_vector<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn scale_to_unit(v: &mut [f64]) {
    let n = norm(v);
    v.iter_mut().for_each(|x| *x /= n);
}

/// Uniformly random unit vector orthogonal to the unit vector `mu`.
fn random_tangent<R: Rng>(mu: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = gaussian_vector(mu.len(), rng);
        let along = dot(&v, mu);
        v.iter_mut().zip(mu).for_each(|(x, m)| *x -= along * m);
        if norm(&v) > 1e-12 {
            scale_to_unit(&mut v);
            return v;
        }
    }
}

fn uniform_direction<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = gaussian_vector(dim, rng);
        if norm(&v) > 1e-12 {
            scale_to_unit(&mut v);
            return v;
        }
    }
}

/// Draw `count` unit vectors from a von Mises-Fisher distribution.
///
/// The cosine to the center comes from Wood's rejection sampler; the remaining
/// direction is uniform on the tangent sphere.
pub fn sample_vmf<R: Rng>(center: &[f64], kappa: f64, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    let m = center.len();
    if m < 2 {
        return Err(Error::InvalidParameter("center needs dimension >= 2".into()));
    }
    let cn = norm(center);
    if (cn - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnit { norm: cn });
    }
    let m1 = (m - 1) as f64;
    let b = m1 / (2.0 * kappa + (4.0 * kappa * kappa + m1 * m1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    // ln(1 - x0^2) written to avoid cancellation when b is tiny.
    let c = kappa * x0 + m1 * ((4.0 * b).ln() - 2.0 * (1.0 + b).ln());
    let beta = Beta::new(m1 / 2.0, m1 / 2.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.gen();
        if kappa * w + m1 * (1.0 - x0 * w).ln() - c < u.ln() {
            continue;
        }
        let w = w.clamp(-1.0, 1.0);
        let t = random_tangent(center, rng);
        let s = (1.0 - w * w).sqrt();
        let mut x: Vec<f64> = center.iter().zip(&t).map(|(c, v)| w * c + s * v).collect();
        scale_to_unit(&mut x);
        out.push(x);
    }
    Ok(out)
}

fn profile_centers(cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let k = cfg.k();
    match cfg.mode {
        Mode::IndependentCenters => (0..k).map(|_| uniform_direction(cfg.dim, &mut rng)).collect(),
        Mode::StrongAkp => {
            let mut pole = vec![0.0; cfg.dim];
            pole[0] = 1.0;
            // All centers lie on one geodesic through the pole.
            let t = random_tangent(&pole, &mut rng);
            let centers = (1..=k)
                .map(|i| {
                    let angle = cfg.center_angle(i);
                    pole.iter()
                        .zip(&t)
                        .map(|(p, v)| angle.cos() * p + angle.sin() * v)
                        .collect()
                })
                .collect();
            centers
        }
    }
}

/// Generate a normalized dataset; profile `i` (1-based) draws from its own
/// generator seeded with `seed + i`.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let centers = profile_centers(cfg);
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    for (i, ((center, &kappa), &count)) in centers
        .iter()
        .zip(&cfg.concentrations)
        .zip(&cfg.n_per_profile)
        .enumerate()
    {
        let profile = i as u32 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(profile as u64));
        for (j, x) in sample_vmf(center, kappa, count, &mut rng)?.into_iter().enumerate() {
            ids.push(format!("kp{profile}-{j:04}"));
            rows.push(x);
            profiles.push(profile);
        }
    }
    Dataset::new(ids, rows, profiles, Some("synthetic".to_string()))?.mark_normalized()
}
