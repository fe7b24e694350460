//! Noise-consistent scaffold injection for flow-matching samplers.
//!
//! Along the path `x_σ = (1 - σ) x₀ + σ ε` the velocity is `v = ε - x₀`.
//! Given a model velocity at `(x_σ, σ)` the implied components are
//!
//! ```text
//! x̂₀ = x_σ - σ v        ε̂ = x_σ + (1 - σ) v
//! ```
//!
//! Injection swaps the clean component inside the mask for the reference
//! latent and rebuilds the state at the same σ with the recovered noise:
//!
//! ```text
//! x̃₀ = (1 - m) x̂₀ + m x₀_ref      x̃_σ = (1 - σ) x̃₀ + σ ε̂
//! ```

use thiserror::Error;

use crate::latent::{LatentError, LatentMask, LatentTensor};
use crate::transport::{decode_latent_b64, encode_latent_b64, Transport, TransportError};

/// Below this noise level the oracle model drops its `1/σ` factor.
pub const ORACLE_SIGMA_GUARD: f64 = 1e-6;
pub const DEFAULT_SIGMA_MIN: f64 = 0.6;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("noise level {0} outside [0, 1]")]
    SigmaOutOfRange(f64),
    #[error("step must decrease sigma: {from} -> {to}")]
    NonMonotoneStep { from: f64, to: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("schedule needs at least one step")]
    InvalidSteps,
    #[error("velocity model failed: {0}")]
    Model(String),
    #[error(transparent)]
    Latent(#[from] LatentError),
}

impl From<TransportError> for FusionError {
    fn from(e: TransportError) -> Self {
        FusionError::Model(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
}

/// Strictly decreasing noise levels from 1 to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(sigmas: Vec<f64>) -> Result<Self, FusionError> {
        if sigmas.len() < 2 {
            return Err(FusionError::InvalidSchedule("needs at least two levels".into()));
        }
        if sigmas[0] != 1.0 || *sigmas.last().unwrap() != 0.0 {
            return Err(FusionError::InvalidSchedule("must start at 1 and end at 0".into()));
        }
        if sigmas.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less)) {
            return Err(FusionError::InvalidSchedule("must be strictly decreasing".into()));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }
}

pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule, FusionError> {
    if steps < 1 {
        return Err(FusionError::InvalidSteps);
    }
    match kind {
        ScheduleKind::Linear => {
            let n = steps as f64;
            NoiseSchedule::new((0..=steps).map(|i| 1.0 - i as f64 / n).collect())
        }
    }
}

/// Where and what to inject, and during which part of the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionConfig {
    /// Inject at every step whose σ is at least this value.
    pub sigma_min: f64,
    pub mask: LatentMask,
    pub reference: LatentTensor,
}

impl InjectionConfig {
    pub fn new(sigma_min: f64, mask: LatentMask, reference: LatentTensor) -> Result<Self, FusionError> {
        if !(0.0..=1.0).contains(&sigma_min) {
            return Err(FusionError::SigmaOutOfRange(sigma_min));
        }
        if !mask.matches(reference.shape()) {
            return Err(FusionError::ShapeMismatch(format!(
                "mask {:?} does not gate reference {:?}",
                mask.shape(),
                reference.shape()
            )));
        }
        Ok(Self {
            sigma_min,
            mask,
            reference,
        })
    }

    pub fn active_at(&self, sigma: f64) -> bool {
        sigma >= self.sigma_min
    }
}

/// Opaque conditioning forwarded to the velocity model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Conditioning {
    pub prompt: Option<String>,
}

/// A velocity predictor `v(x_σ, σ)`.
pub trait VelocityModel: Send + Sync {
    fn evaluate(&self, x: &LatentTensor, sigma: f64, cond: &Conditioning) -> Result<LatentTensor, FusionError>;
}

/// Exact flow towards a fixed target: `v = (x - target) / σ`.
#[derive(Debug, Clone)]
pub struct OracleModel {
    target: LatentTensor,
}

pub fn oracle_velocity_model(target: LatentTensor) -> OracleModel {
    OracleModel { target }
}

impl OracleModel {
    pub fn target(&self) -> &LatentTensor {
        &self.target
    }
}

impl VelocityModel for OracleModel {
    fn evaluate(&self, x: &LatentTensor, sigma: f64, _cond: &Conditioning) -> Result<LatentTensor, FusionError> {
        check_same(x, &self.target, "oracle target")?;
        if sigma <= ORACLE_SIGMA_GUARD {
            Ok(x.zip_with(&self.target, |a, b| a - b)?)
        } else {
            Ok(x.zip_with(&self.target, |a, b| (a - b) / sigma)?)
        }
    }
}

/// Always predicts zero velocity.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroModel;

impl VelocityModel for ZeroModel {
    fn evaluate(&self, x: &LatentTensor, _sigma: f64, _cond: &Conditioning) -> Result<LatentTensor, FusionError> {
        Ok(LatentTensor::zeros(x.shape()))
    }
}

/// Velocity served by an external endpoint.
///
/// Request: `{"role": "velocity", "sigma": σ, "latent": <base64 PHYL>,
/// "prompt": <string or null>}`; response: `{"latent": <base64 PHYL>}`.
pub struct RemoteModel<T> {
    transport: T,
}

impl<T: Transport> RemoteModel<T> {
    pub fn new(transport: T) -> Self {
        Self { transport }
    }
}

impl<T: Transport> VelocityModel for RemoteModel<T> {
    fn evaluate(&self, x: &LatentTensor, sigma: f64, cond: &Conditioning) -> Result<LatentTensor, FusionError> {
        let request = serde_json::json!({
            "role": "velocity",
            "sigma": sigma,
            "latent": encode_latent_b64(x)?,
            "prompt": cond.prompt,
        });
        let response = self.transport.exchange(&request)?;
        let field = response
            .get("latent")
            .and_then(|v| v.as_str())
            .ok_or_else(|| FusionError::Model("response lacks a 'latent' string".into()))?;
        let v = decode_latent_b64(field)?;
        check_same(x, &v, "remote velocity")?;
        Ok(v)
    }
}

fn check_same(a: &LatentTensor, b: &LatentTensor, what: &str) -> Result<(), FusionError> {
    if a.shape() != b.shape() {
        return Err(FusionError::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<(), FusionError> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(FusionError::SigmaOutOfRange(sigma));
    }
    Ok(())
}

/// Clean and noise components implied by velocity `v` at `(x_sigma, sigma)`.
pub fn recover_components(
    x_sigma: &LatentTensor,
    sigma: f64,
    v: &LatentTensor,
) -> Result<(LatentTensor, LatentTensor), FusionError> {
    check_sigma(sigma)?;
    check_same(x_sigma, v, "velocity")?;
    let x0_hat = x_sigma
        .zip_with(v, |x, v| x - sigma * v)
        .map_err(|_| FusionError::NonFinite("clean estimate"))?;
    let eps_hat = x_sigma
        .zip_with(v, |x, v| x + (1.0 - sigma) * v)
        .map_err(|_| FusionError::NonFinite("noise estimate"))?;
    Ok((x0_hat, eps_hat))
}

/// Replaces the clean component inside the mask with the reference and
/// re-noises with the recovered noise, at the same σ.
pub fn inject_scaffold(
    x_sigma: &LatentTensor,
    sigma: f64,
    v: &LatentTensor,
    cfg: &InjectionConfig,
) -> Result<LatentTensor, FusionError> {
    check_same(x_sigma, &cfg.reference, "reference")?;
    let shape = x_sigma.shape();
    if !cfg.mask.matches(shape) {
        return Err(FusionError::ShapeMismatch(format!(
            "mask {:?} does not gate latent {shape:?}",
            cfg.mask.shape()
        )));
    }
    let (x0_hat, eps_hat) = recover_components(x_sigma, sigma, v)?;
    let reference = cfg.reference.data();
    let out: Vec<f64> = x0_hat
        .data()
        .iter()
        .zip(eps_hat.data())
        .enumerate()
        .map(|(i, (&x0, &eps))| {
            let m = if cfg.mask.at_tensor_index(shape, i) { 1.0 } else { 0.0 };
            let x0_tilde = (1.0 - m) * x0 + m * reference[i];
            (1.0 - sigma) * x0_tilde + sigma * eps
        })
        .collect();
    LatentTensor::new(shape, out).map_err(|_| FusionError::NonFinite("injected latent"))
}

/// Explicit Euler step of `dx/dσ = v` from `sigma_from` down to `sigma_to`.
pub fn euler_step(x: &LatentTensor, sigma_from: f64, sigma_to: f64, v: &LatentTensor) -> Result<LatentTensor, FusionError> {
    if sigma_to.partial_cmp(&sigma_from) != Some(std::cmp::Ordering::Less) {
        return Err(FusionError::NonMonotoneStep {
            from: sigma_from,
            to: sigma_to,
        });
    }
    check_same(x, v, "velocity")?;
    let dt = sigma_to - sigma_from;
    x.zip_with(v, |x, v| x + dt * v)
        .map_err(|_| FusionError::NonFinite("euler update"))
}

/// Number of schedule steps that fall inside the injection window.
pub fn injected_steps(schedule: &NoiseSchedule, sigma_min: f64) -> usize {
    schedule.sigmas()[..schedule.steps()]
        .iter()
        .filter(|&&s| s >= sigma_min)
        .count()
}

/// Integrates from pure noise (σ = 1) to σ = 0. Inside the injection window
/// the state is corrected first and the velocity re-evaluated on the
/// corrected state before stepping.
pub fn sample(
    init_noise: &LatentTensor,
    model: &dyn VelocityModel,
    schedule: &NoiseSchedule,
    injection: Option<&InjectionConfig>,
    cond: &Conditioning,
) -> Result<LatentTensor, FusionError> {
    let mut x = init_noise.clone();
    for pair in schedule.sigmas().windows(2) {
        let (sigma, next) = (pair[0], pair[1]);
        let mut v = model.evaluate(&x, sigma, cond)?;
        check_same(&x, &v, "model output")?;
        if let Some(cfg) = injection.filter(|c| c.active_at(sigma)) {
            x = inject_scaffold(&x, sigma, &v, cfg)?;
            v = model.evaluate(&x, sigma, cond)?;
            check_same(&x, &v, "model output")?;
        }
        x = euler_step(&x, sigma, next, &v)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> LatentTensor {
        LatentTensor::filled([1, 1, 1, 1], v)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn recover_scalar_examples() {
        let (x0, eps) = recover_components(&scalar(1.0), 0.5, &scalar(0.4)).unwrap();
        assert!(close(x0.data()[0], 0.8) && close(eps.data()[0], 1.2));

        let (x0, eps) = recover_components(&scalar(1.0), 0.0, &scalar(0.4)).unwrap();
        assert_eq!((x0.data()[0], eps.data()[0]), (1.0, 1.4));

        let (x0, eps) = recover_components(&scalar(1.0), 1.0, &scalar(0.4)).unwrap();
        assert_eq!((x0.data()[0], eps.data()[0]), (0.6, 1.0));

        assert!(matches!(
            recover_components(&scalar(1.0), 0.5, &LatentTensor::zeros([1, 1, 1, 2])),
            Err(FusionError::ShapeMismatch(_))
        ));
    }

    fn cfg(on: bool, reference: LatentTensor) -> InjectionConfig {
        let [f, _, h, w] = reference.shape();
        InjectionConfig::new(DEFAULT_SIGMA_MIN, LatentMask::filled(f, h, w, on), reference).unwrap()
    }

    #[test]
    fn inject_scalar_chain() {
        let out = inject_scaffold(&scalar(1.0), 0.5, &scalar(0.4), &cfg(true, scalar(2.0))).unwrap();
        assert!(close(out.data()[0], 1.6));

        let out = inject_scaffold(&scalar(1.0), 0.5, &scalar(0.4), &cfg(false, scalar(2.0))).unwrap();
        assert!(close(out.data()[0], 1.0));

        // reference agrees with the model's clean estimate
        let out = inject_scaffold(&scalar(1.0), 0.5, &scalar(0.4), &cfg(true, scalar(0.8))).unwrap();
        assert!(close(out.data()[0], 1.0));
    }

    #[test]
    fn schedules() {
        assert_eq!(make_schedule(1, ScheduleKind::Linear).unwrap().sigmas(), &[1.0, 0.0]);
        assert_eq!(
            make_schedule(4, ScheduleKind::Linear).unwrap().sigmas(),
            &[1.0, 0.75, 0.5, 0.25, 0.0]
        );
        assert!(matches!(make_schedule(0, ScheduleKind::Linear), Err(FusionError::InvalidSteps)));
        assert!(NoiseSchedule::new(vec![1.0, 0.5, 0.5, 0.0]).is_err());
        assert!(NoiseSchedule::new(vec![0.9, 0.0]).is_err());

        let s = make_schedule(10, ScheduleKind::Linear).unwrap();
        assert_eq!(injected_steps(&s, 0.6), 5);
    }

    #[test]
    fn euler_examples() {
        let x = scalar(1.0);
        assert_eq!(euler_step(&x, 0.5, 0.25, &scalar(0.0)).unwrap(), x);
        assert!(close(euler_step(&x, 0.5, 0.25, &scalar(0.4)).unwrap().data()[0], 0.9));

        let v = scalar(0.4);
        let half = euler_step(&euler_step(&x, 0.5, 0.375, &v).unwrap(), 0.375, 0.25, &v).unwrap();
        assert!(close(half.data()[0], 0.9));

        assert!(matches!(
            euler_step(&x, 0.25, 0.5, &v),
            Err(FusionError::NonMonotoneStep { .. })
        ));
    }

    #[test]
    fn oracle_model_examples() {
        let target = LatentTensor::new([1, 1, 1, 3], vec![0.1, -0.4, 0.9]).unwrap();
        let model = oracle_velocity_model(target.clone());
        let x = LatentTensor::new([1, 1, 1, 3], vec![1.2, 0.3, -2.0]).unwrap();
        let cond = Conditioning::default();

        let v = model.evaluate(&x, 1.0, &cond).unwrap();
        let (x0, _) = recover_components(&x, 1.0, &v).unwrap();
        assert!(x0.max_abs_diff(&target) <= 1e-15);

        let still = model.evaluate(&target, 0.3, &cond).unwrap();
        assert!(still.data().iter().all(|&v| v == 0.0));

        // σ guard: no blow-up at 0
        let v0 = model.evaluate(&x, 0.0, &cond).unwrap();
        assert!(v0.max_abs_diff(&x.zip_with(&target, |a, b| a - b).unwrap()) == 0.0);
    }

    #[test]
    fn zero_model_freezes_noise() {
        let noise = LatentTensor::new([1, 1, 2, 2], vec![0.3, -1.2, 2.2, 0.0]).unwrap();
        let schedule = make_schedule(16, ScheduleKind::Linear).unwrap();
        let out = sample(&noise, &ZeroModel, &schedule, None, &Conditioning::default()).unwrap();
        assert_eq!(out, noise);
    }

    #[test]
    fn oracle_sampler_reaches_target() {
        let target = LatentTensor::new([1, 2, 2, 2], (0..8).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let noise = LatentTensor::new([1, 2, 2, 2], (0..8).map(|i| (i as f64 * 1.3).cos()).collect()).unwrap();
        let schedule = make_schedule(64, ScheduleKind::Linear).unwrap();
        let model = oracle_velocity_model(target.clone());
        let out = sample(&noise, &model, &schedule, None, &Conditioning::default()).unwrap();
        assert!(out.max_abs_diff(&target) <= 1e-5);
    }

    #[test]
    fn oracle_attractor_absorbs_early_injection() {
        // The oracle's clean estimate is its target from any state, so any
        // correction made before σ = 0 is pulled back onto the target.
        let target = LatentTensor::filled([1, 1, 2, 2], 0.25);
        let reference = LatentTensor::filled([1, 1, 2, 2], -0.75);
        let noise = LatentTensor::new([1, 1, 2, 2], vec![0.5, -0.5, 1.5, 0.1]).unwrap();
        let schedule = make_schedule(64, ScheduleKind::Linear).unwrap();
        let injection = InjectionConfig::new(0.5, LatentMask::filled(1, 2, 2, true), reference).unwrap();
        let model = oracle_velocity_model(target.clone());
        let out = sample(&noise, &model, &schedule, Some(&injection), &Conditioning::default()).unwrap();
        assert!(out.max_abs_diff(&target) <= 1e-12);
    }

    #[test]
    fn injection_config_rejects_mismatched_mask() {
        let reference = LatentTensor::zeros([2, 4, 8, 8]);
        assert!(InjectionConfig::new(0.6, LatentMask::filled(2, 4, 8, true), reference.clone()).is_err());
        assert!(InjectionConfig::new(1.5, LatentMask::filled(2, 8, 8, true), reference).is_err());
    }
}
