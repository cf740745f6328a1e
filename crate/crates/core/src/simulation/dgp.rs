//! Synthetic trial generator.
//!
//! ```text
//! (X, U) ~ bivariate standard normal, corr ρ_XU
//! Z      = β0 + β1 X + β2 U + ε_N
//! Y(0)   = β0 + β1 X + β2 U + ε_Y
//! N      = Z + β_N A            (identity link)
//! N      = 8 / (1 + exp(−Z))    (logistic8 link)
//! Y      = Y(0) + β A
//! ```
//!
//! `ε_N`, `ε_Y` are independent standard normals and `A` is i.i.d.
//! Bernoulli(π), redrawn until each arm has at least `min_arm_size` units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{NamedColumns, TrialDataset};
use crate::error::{Error, Result};

/// Redraw attempts before giving up on an assignment with large enough arms.
const MAX_ASSIGNMENT_DRAWS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    /// `g(x) = −log(8/x − 1)`: NCO saturates at 0 and 8.
    Logistic8,
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Logistic8 => "logistic8",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n: usize,
    pub pi: f64,
    /// Effect of treatment on the primary outcome.
    pub beta: f64,
    /// Effect of treatment on the NCO (zero when the NCO is valid).
    pub beta_n: f64,
    pub rho_yx: f64,
    pub rho_yn_given_x: f64,
    pub rho_xu: f64,
    pub beta0: f64,
    pub link: Link,
    pub replicates: usize,
    pub seed: u64,
    /// Smallest arm size accepted when drawing treatment.
    pub min_arm_size: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n: 120,
            pi: 0.8,
            beta: 1.0,
            beta_n: 0.0,
            rho_yx: 0.3,
            rho_yn_given_x: 0.8,
            rho_xu: 0.0,
            beta0: 1.0,
            link: Link::Identity,
            replicates: 1000,
            seed: 1,
            min_arm_size: 4,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::InvalidPi(self.pi));
        }
        if self.min_arm_size == 0 {
            return bad("min_arm_size must be at least 1".into());
        }
        if self.n < 2 * self.min_arm_size || self.n < crate::data::MIN_ROWS {
            return bad(format!("n = {} is too small for min_arm_size = {}", self.n, self.min_arm_size));
        }
        if !(self.rho_xu > -1.0 && self.rho_xu < 1.0) {
            return bad(format!("rho_xu = {} must lie in (-1, 1)", self.rho_xu));
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.link == Link::Logistic8 && self.beta_n != 0.0 {
            return bad("beta_n must be 0 under the logistic8 link".into());
        }
        for (name, v) in [("beta", self.beta), ("beta_n", self.beta_n), ("beta0", self.beta0)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        derive_coefficients(self.rho_yx, self.rho_yn_given_x)?;
        Ok(())
    }

    pub fn coefficients(&self) -> Result<(f64, f64)> {
        derive_coefficients(self.rho_yx, self.rho_yn_given_x)
    }
}

/// `(β1, β2)` from the target correlations:
/// `β2 = sqrt(ρ_YN|X / (1 − ρ_YN|X))`, `β1 = sqrt(ρ_YX² (β2² + 1) / (1 − ρ_YX²))`.
pub fn derive_coefficients(rho_yx: f64, rho_yn_given_x: f64) -> Result<(f64, f64)> {
    for (name, r) in [("rho_yx", rho_yx), ("rho_yn_given_x", rho_yn_given_x)] {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("{name} = {r} must lie in [0, 1)")));
        }
    }
    let beta2 = (rho_yn_given_x / (1.0 - rho_yn_given_x)).sqrt();
    let beta1 = (rho_yx * rho_yx * (beta2 * beta2 + 1.0) / (1.0 - rho_yx * rho_yx)).sqrt();
    Ok((beta1, beta2))
}

/// Unit-level draws of one replicate, including latent quantities.
#[derive(Debug, Clone)]
pub struct Units {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    pub y0: Vec<f64>,
    pub treatment: Vec<u8>,
    pub nco: Vec<f64>,
    pub y: Vec<f64>,
    /// Assignment draws rejected for having a too-small arm.
    pub redraws: u32,
}

pub fn logistic8(z: f64) -> f64 {
    8.0 / (1.0 + (-z).exp())
}

/// Random generator for replicate `index` of a scenario seed.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn draw_units(params: &ScenarioParams, replicate_index: u64) -> Result<Units> {
    params.validate()?;
    let (beta1, beta2) = params.coefficients()?;
    let n = params.n;
    let mut rng = replicate_rng(params.seed, replicate_index);
    let rho = params.rho_xu;
    let rho_c = (1.0 - rho * rho).sqrt();

    let mut units = Units {
        x: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        treatment: vec![0; n],
        nco: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        redraws: 0,
    };
    for _ in 0..n {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let eps_n: f64 = rng.sample(StandardNormal);
        let eps_y: f64 = rng.sample(StandardNormal);
        let x = e1;
        let u = rho * e1 + rho_c * e2;
        let mu = params.beta0 + beta1 * x + beta2 * u;
        units.x.push(x);
        units.u.push(u);
        units.z.push(mu + eps_n);
        units.y0.push(mu + eps_y);
    }

    loop {
        let mut n1 = 0;
        for a in units.treatment.iter_mut() {
            *a = u8::from(rng.random_bool(params.pi));
            n1 += *a as usize;
        }
        if n1 >= params.min_arm_size && n - n1 >= params.min_arm_size {
            break;
        }
        units.redraws += 1;
        if units.redraws >= MAX_ASSIGNMENT_DRAWS {
            return Err(Error::InvalidParameter(format!(
                "could not draw arms of size >= {} with n = {} and pi = {}",
                params.min_arm_size, n, params.pi
            )));
        }
    }

    for i in 0..n {
        let a = units.treatment[i] as f64;
        units.nco.push(match params.link {
            Link::Identity => units.z[i] + params.beta_n * a,
            Link::Logistic8 => logistic8(units.z[i]),
        });
        units.y.push(units.y0[i] + params.beta * a);
    }
    Ok(units)
}

/// Observed trial for one replicate: treatment `A`, covariate `X`, NCO `N`,
/// outcome `Y`.
pub fn generate_trial(params: &ScenarioParams, replicate_index: u64) -> Result<TrialDataset> {
    Ok(units_to_dataset(params, draw_units(params, replicate_index)?)?.0)
}

pub(crate) fn units_to_dataset(params: &ScenarioParams, units: Units) -> Result<(TrialDataset, u32)> {
    let redraws = units.redraws;
    let data = TrialDataset::new(
        units.treatment,
        NamedColumns::new(vec!["X".into()], vec![units.x])?,
        NamedColumns::new(vec!["N".into()], vec![units.nco])?,
        units.y,
        params.pi,
    )?;
    Ok((data, redraws))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_identities() {
        let (_, b2) = derive_coefficients(0.3, 0.5).unwrap();
        assert!((b2 - 1.0).abs() < 1e-15);
        assert_eq!(derive_coefficients(0.3, 0.0).unwrap().1, 0.0);
        let (b1, _) = derive_coefficients(0.3, 0.5).unwrap();
        assert!((b1 - 0.444749).abs() < 1e-6, "{b1}");
        let (b1, b2) = derive_coefficients(0.3, 0.8).unwrap();
        assert!((b2 - 2.0).abs() < 1e-12);
        assert!((b1 - 0.703211).abs() < 1e-6, "{b1}");
        assert!(derive_coefficients(1.0, 0.5).is_err());
        assert!(derive_coefficients(0.3, 1.0).is_err());
        assert!(derive_coefficients(-0.1, 0.5).is_err());
    }

    #[test]
    fn logistic_saturation() {
        assert_eq!(logistic8(0.0), 4.0);
        assert!((logistic8(50.0) - 8.0).abs() < 1e-12);
        assert!(logistic8(-50.0) < 1e-12);
    }

    #[test]
    fn logistic_with_nco_effect_rejected() {
        let p = ScenarioParams {
            link: Link::Logistic8,
            beta_n: 0.5,
            ..Default::default()
        };
        assert!(matches!(generate_trial(&p, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn replicates_are_reproducible_and_distinct() {
        let p = ScenarioParams { n: 40, ..Default::default() };
        let a = generate_trial(&p, 3).unwrap();
        let b = generate_trial(&p, 3).unwrap();
        let c = generate_trial(&p, 4).unwrap();
        assert_eq!(a.outcome(), b.outcome());
        assert_eq!(a.treatment(), b.treatment());
        assert_ne!(a.outcome(), c.outcome());
    }

    #[test]
    fn arms_respect_minimum_size() {
        let p = ScenarioParams { n: 12, pi: 0.8, min_arm_size: 3, ..Default::default() };
        for r in 0..200 {
            let d = generate_trial(&p, r).unwrap();
            assert!(d.n_control() >= 3 && d.n_treated() >= 3);
        }
    }

    #[test]
    fn effect_enters_outcome_and_nco() {
        let p = ScenarioParams { n: 50, beta: 1.5, beta_n: 0.7, ..Default::default() };
        let u = draw_units(&p, 0).unwrap();
        for i in 0..50 {
            let a = u.treatment[i] as f64;
            assert!((u.y[i] - u.y0[i] - 1.5 * a).abs() < 1e-12);
            assert!((u.nco[i] - u.z[i] - 0.7 * a).abs() < 1e-12);
        }
    }
}
