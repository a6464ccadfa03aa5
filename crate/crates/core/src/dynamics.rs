//! Time integration of `u_tt - L_h u + b u_t + m u = f(u)` (plus optional
//! manufactured forcing), nonlinearity evaluation, and blow-up detection.
//!
//! The integrator is the classical 4-stage explicit scheme on the first-order
//! system `(u, v)`: fourth-order in time so convergence studies see spatial
//! error only, with stability governed by the CFL precondition
//! `dt <= cfl_fraction * 2.8 / sqrt(spectral_bound + m)` (2.8 from the
//! scheme's stability interval on the imaginary axis).

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functionals::{self, DiagnosticsRow, Trace};
use crate::grid::{self, Field};
use crate::subop;

pub const CFL_STABILITY_CONSTANT: f64 = 2.8;
pub const DEFAULT_CFL_FRACTION: f64 = 0.5;
pub const DEFAULT_LINF_THRESHOLD: f64 = 1e6;
pub const DEFAULT_FIT_WINDOW: usize = 20;
pub const MAX_DT_HALVINGS: u32 = 20;

/// Damping `b >= 0` and mass `m >= 0`. The blow-up certificate additionally
/// requires both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    pub b: f64,
    pub m: f64,
}

impl PhysParams {
    pub fn new(b: f64, m: f64) -> Result<Self> {
        if !(b.is_finite() && m.is_finite() && b >= 0.0 && m >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "damping and mass must be finite and nonnegative, got b={b}, m={m}"
            )));
        }
        Ok(Self { b, m })
    }
}

type ScalarFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;
type PotentialFn = Arc<dyn Fn(Complex64) -> f64 + Send + Sync>;

/// Nonlinear term. The power kind is `f(u) = kappa |u|^{p-1} u` with
/// potential density `F(u) = kappa |u|^{p+1} / (p+1)` and growth exponent
/// `alpha = p + 1`; a custom kind supplies its own `f`, `F` and `alpha` and
/// must pass a sampled growth check before use.
#[derive(Clone)]
pub enum NonlinearSpec {
    Power { p: f64, kappa: f64 },
    Custom {
        f: ScalarFn,
        potential: PotentialFn,
        alpha: f64,
    },
}

impl std::fmt::Debug for NonlinearSpec {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NonlinearSpec::Power { p, kappa } => {
                write!(fm, "Power {{ p: {p}, kappa: {kappa} }}")
            }
            NonlinearSpec::Custom { alpha, .. } => write!(fm, "Custom {{ alpha: {alpha} }}"),
        }
    }
}

impl NonlinearSpec {
    pub fn power(p: f64, kappa: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidInput(format!("exponent p must exceed 1, got {p}")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coupling kappa must be finite and nonnegative, got {kappa}"
            )));
        }
        Ok(NonlinearSpec::Power { p, kappa })
    }

    /// Custom nonlinearity; validated by sampling `f(0) = 0` and the growth
    /// condition `alpha F(z) <= Re[f(z) conj(z)]` over seeded sample points.
    pub fn custom(f: ScalarFn, potential: PotentialFn, alpha: f64) -> Result<Self> {
        if !(alpha > 2.0 && alpha.is_finite()) {
            return Err(Error::Hypothesis(format!(
                "custom nonlinearity needs alpha > 2, got {alpha}"
            )));
        }
        let spec = NonlinearSpec::Custom { f, potential, alpha };
        spec.validate_samples()?;
        Ok(spec)
    }

    fn validate_samples(&self) -> Result<()> {
        let NonlinearSpec::Custom { f, potential, alpha } = self else {
            return Ok(());
        };
        let zero = f(Complex64::new(0.0, 0.0));
        if zero.norm() != 0.0 {
            return Err(Error::Hypothesis(format!("f(0) = {zero}, expected 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..256 {
            let r = 10.0 * rng.random_range(0.0..1.0f64).powi(2);
            let th = rng.random_range(0.0..std::f64::consts::TAU);
            let z = Complex64::from_polar(r, th);
            let fv = f(z);
            let pv = potential(z);
            if !fv.is_finite() || !pv.is_finite() {
                return Err(Error::NonFinite(format!("custom nonlinearity at z = {z}")));
            }
            let pair = (fv * z.conj()).re;
            let slack = 1e-9 * (1.0 + pair.abs() + pv.abs());
            if alpha * pv > pair + slack {
                return Err(Error::Hypothesis(format!(
                    "growth condition failed at z = {z}: alpha F = {} > Re[f conj(z)] = {pair}",
                    alpha * pv
                )));
            }
        }
        Ok(())
    }

    /// Growth exponent: `p + 1` for the power kind, as declared otherwise.
    pub fn alpha(&self) -> f64 {
        match self {
            NonlinearSpec::Power { p, .. } => p + 1.0,
            NonlinearSpec::Custom { alpha, .. } => *alpha,
        }
    }

    pub fn power_exponent(&self) -> Option<f64> {
        match self {
            NonlinearSpec::Power { p, .. } => Some(*p),
            NonlinearSpec::Custom { .. } => None,
        }
    }

    /// `f(z)`; exactly 0 at z = 0.
    pub fn f_eval(&self, z: Complex64) -> Complex64 {
        match self {
            NonlinearSpec::Power { p, kappa } => {
                if z.re == 0.0 && z.im == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    kappa * z.norm().powf(p - 1.0) * z
                }
            }
            NonlinearSpec::Custom { f, .. } => f(z),
        }
    }

    /// Potential density `F(z)`.
    pub fn potential_eval(&self, z: Complex64) -> f64 {
        match self {
            NonlinearSpec::Power { p, kappa } => kappa * z.norm().powf(p + 1.0) / (p + 1.0),
            NonlinearSpec::Custom { potential, .. } => potential(z),
        }
    }

    /// Local stiffness scale `|f'(u)| ~ kappa p linf^{p-1}`, used by the
    /// in-run time-step control. Zero for custom kinds (unknown growth).
    pub fn stiffness(&self, linf: f64) -> f64 {
        match self {
            NonlinearSpec::Power { p, kappa } => kappa * p * linf.powf(p - 1.0),
            NonlinearSpec::Custom { .. } => 0.0,
        }
    }
}

/// Pair `(u, v)` with `v = du/dtau`, plus the simulation time.
#[derive(Debug, Clone)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub tau: f64,
}

impl State {
    pub fn new(u: Field, v: Field, tau: f64) -> Result<Self> {
        if !u.same_grid(&v) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u, v, tau })
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusTag {
    Running,
    Completed,
    BlowupDetected,
    NonfiniteAbort,
}

impl StatusTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatusTag::Running => "running",
            StatusTag::Completed => "completed",
            StatusTag::BlowupDetected => "blowup_detected",
            StatusTag::NonfiniteAbort => "nonfinite_abort",
        }
    }
}

/// Final disposition of a run. `BlowupDetected` means the linf norm crossed
/// the configured threshold on a finite value.
#[derive(Debug, Clone)]
pub struct RunStatus {
    pub tag: StatusTag,
    pub tau_stop: f64,
    pub blowup_estimate: Option<f64>,
}

/// Additive source term: implementations add `S(., tau)` into an
/// acceleration field.
pub trait Forcing: Send + Sync {
    fn add(&self, tau: f64, accel: &mut Field);
}

/// Right-hand side for `v`: `L_h u - m u - b v + f(u) + S(., tau)`.
pub fn acceleration(
    state: &State,
    params: &PhysParams,
    spec: &NonlinearSpec,
    forcing: Option<&dyn Forcing>,
) -> Field {
    let mut a = subop::sublaplacian(&state.u);
    let (m, b) = (params.m, params.b);
    let uv = state.u.values();
    let vv = state.v.values();
    a.apply(|k, lk| lk - m * uv[k] - b * vv[k] + spec.f_eval(uv[k]));
    if let Some(src) = forcing {
        src.add(state.tau, &mut a);
    }
    a
}

/// One classical 4-stage step of size `dt` on `(u, v)`.
///
/// Precondition (not rechecked here): `dt <= cfl_fraction * 2.8 /
/// sqrt(spectral_bound + m)`; [`run`] enforces it and adapts further when the
/// nonlinearity stiffens.
pub fn step(
    state: &State,
    dt: f64,
    params: &PhysParams,
    spec: &NonlinearSpec,
    forcing: Option<&dyn Forcing>,
) -> State {
    let one = Complex64::new(1.0, 0.0);
    let half = Complex64::new(0.5 * dt, 0.0);
    let full = Complex64::new(dt, 0.0);

    let k1u = state.v.clone();
    let k1v = acceleration(state, params, spec, forcing);

    let mid1 = State {
        u: state.u.add_scaled(&k1u, half).expect("grids match"),
        v: state.v.add_scaled(&k1v, half).expect("grids match"),
        tau: state.tau + 0.5 * dt,
    };
    let k2u = mid1.v.clone();
    let k2v = acceleration(&mid1, params, spec, forcing);

    let mid2 = State {
        u: state.u.add_scaled(&k2u, half).expect("grids match"),
        v: state.v.add_scaled(&k2v, half).expect("grids match"),
        tau: state.tau + 0.5 * dt,
    };
    let k3u = mid2.v.clone();
    let k3v = acceleration(&mid2, params, spec, forcing);

    let end = State {
        u: state.u.add_scaled(&k3u, full).expect("grids match"),
        v: state.v.add_scaled(&k3v, full).expect("grids match"),
        tau: state.tau + dt,
    };
    let k4u = end.v.clone();
    let k4v = acceleration(&end, params, spec, forcing);

    let sixth = dt / 6.0;
    let combine = |base: &Field, k1: &Field, k2: &Field, k3: &Field, k4: &Field| {
        let mut out = base.clone();
        let (b1, b2, b3, b4) = (k1.values(), k2.values(), k3.values(), k4.values());
        out.apply(|k, z| z + sixth * (b1[k] + 2.0 * b2[k] + 2.0 * b3[k] + b4[k]));
        out
    };
    let _ = one;
    State {
        u: combine(&state.u, &k1u, &k2u, &k3u, &k4u),
        v: combine(&state.v, &k1v, &k2v, &k3v, &k4v),
        tau: state.tau + dt,
    }
}

/// Everything a run needs beyond the initial state.
pub struct RunSetup<'a> {
    pub params: PhysParams,
    pub nonlin: NonlinearSpec,
    pub forcing: Option<&'a dyn Forcing>,
    pub t_end: f64,
    pub cfl_fraction: f64,
    pub output_every: usize,
    pub linf_threshold: f64,
    pub fit_window: usize,
    /// Horizon T0 of the certificate; enables the M column of the trace.
    pub cert_t0: Option<f64>,
    /// Echo of the caller's normalized configuration, stored into the trace.
    pub config_echo: Vec<(String, String)>,
}

impl<'a> RunSetup<'a> {
    pub fn new(params: PhysParams, nonlin: NonlinearSpec) -> Self {
        Self {
            params,
            nonlin,
            forcing: None,
            t_end: 1.0,
            cfl_fraction: DEFAULT_CFL_FRACTION,
            output_every: 1,
            linf_threshold: DEFAULT_LINF_THRESHOLD,
            fit_window: DEFAULT_FIT_WINDOW,
            cert_t0: None,
            config_echo: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "t_end must be finite and nonnegative, got {}",
                self.t_end
            )));
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "cfl_fraction must lie in (0, 1], got {}",
                self.cfl_fraction
            )));
        }
        if self.output_every == 0 {
            return Err(Error::InvalidInput("output_every must be >= 1".into()));
        }
        if !(self.linf_threshold > 0.0) {
            return Err(Error::InvalidInput("linf_threshold must be positive".into()));
        }
        if self.fit_window < 8 {
            return Err(Error::InvalidInput(
                "fit_window must be at least 8 samples".into(),
            ));
        }
        if let Some(t0) = self.cert_t0 {
            if !(t0 > 0.0 && t0.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "certificate horizon T0 must be positive, got {t0}"
                )));
            }
        }
        Ok(())
    }
}

/// Stability limit `cfl_fraction * 2.8 / sqrt(operator_bound + m)`.
pub fn cfl_max_dt(spectral_bound: f64, m: f64, cfl_fraction: f64) -> f64 {
    cfl_fraction * CFL_STABILITY_CONSTANT / (spectral_bound + m).sqrt()
}

/// Integrate from `state0` to `t_end` or until blow-up detection, recording
/// diagnostics every `output_every` steps (trapezoid accumulators run on the
/// recorded grid). When the nonlinearity stiffens the step halves, at most
/// [`MAX_DT_HALVINGS`] times, so the trajectory can approach the singularity
/// without overflow; detection fires when the linf norm crosses the
/// threshold on finite values, and the tail fit then estimates the blow-up
/// time.
pub fn run(state0: State, setup: &RunSetup) -> Result<(Trace, RunStatus)> {
    setup.validate()?;
    if !state0.is_finite() {
        return Err(Error::NonFinite("initial state".into()));
    }

    let mut trace = Trace::new(setup.config_echo.clone());
    if setup.t_end == 0.0 {
        let status = RunStatus {
            tag: StatusTag::Completed,
            tau_stop: state0.tau,
            blowup_estimate: None,
        };
        trace.status = Some(status.clone());
        return Ok((trace, status));
    }

    let sb = subop::spectral_bound(state0.u.grid()).value;
    let dt0 = cfl_max_dt(sb, setup.params.m, setup.cfl_fraction);
    let mut dt = dt0;
    let mut halvings = 0u32;

    let t_final = state0.tau + setup.t_end;
    let norm_u0_sq = grid::l2_norm_sq(&state0.u);
    let mut recorder = functionals::TraceRecorder::new(
        &setup.params,
        &setup.nonlin,
        setup.cert_t0,
        norm_u0_sq,
    );

    let mut state = state0;
    let mut step_index: u64 = 0;
    recorder.record(&mut trace, step_index, &state);

    loop {
        // Tighten dt when the local linearization of f stiffens the system.
        let linf = grid::linf_norm(&state.u);
        let required = cfl_max_dt(
            sb + setup.nonlin.stiffness(linf),
            setup.params.m,
            setup.cfl_fraction,
        );
        while dt > required && halvings < MAX_DT_HALVINGS {
            dt *= 0.5;
            halvings += 1;
        }

        let dt_step = dt.min(t_final - state.tau);
        state = step(&state, dt_step, &setup.params, &setup.nonlin, setup.forcing);
        step_index += 1;

        if !state.is_finite() {
            let status = RunStatus {
                tag: StatusTag::NonfiniteAbort,
                tau_stop: state.tau,
                blowup_estimate: None,
            };
            trace.status = Some(status.clone());
            return Ok((trace, status));
        }

        let linf_now = grid::linf_norm(&state.u);
        let detected = linf_now >= setup.linf_threshold;
        let finished = state.tau >= t_final - 1e-12 * t_final.abs().max(1.0);

        if detected || finished || step_index % setup.output_every as u64 == 0 {
            recorder.record(&mut trace, step_index, &state);
        }

        if detected {
            let samples: Vec<(f64, f64)> = trace
                .rows
                .iter()
                .map(|r| (r.tau, r.linf_u))
                .collect();
            let estimate = setup
                .nonlin
                .power_exponent()
                .and_then(|p| estimate_blowup_time(&samples, p, setup.fit_window).ok());
            let status = RunStatus {
                tag: StatusTag::BlowupDetected,
                tau_stop: state.tau,
                blowup_estimate: estimate,
            };
            trace.status = Some(status.clone());
            return Ok((trace, status));
        }
        if finished {
            let status = RunStatus {
                tag: StatusTag::Completed,
                tau_stop: state.tau,
                blowup_estimate: None,
            };
            trace.status = Some(status.clone());
            return Ok((trace, status));
        }
    }
}

/// Least-squares fit of `linf^{-(p-1)/2}` against `tau` over the trailing
/// window, returning the fitted zero crossing. The transform comes from the
/// scalar blow-up profile `u ~ C (T - tau)^{-2/(p-1)}`, for which the fit
/// model is exact.
pub fn estimate_blowup_time(samples: &[(f64, f64)], p: f64, window: usize) -> Result<f64> {
    let tail_start = samples.len().saturating_sub(window.max(8));
    let tail = &samples[tail_start..];
    if tail.len() < 8 {
        return Err(Error::EstimationUnavailable(format!(
            "need at least 8 samples, have {}",
            tail.len()
        )));
    }
    for w in tail.windows(2) {
        if !(w[1].1 > w[0].1) {
            return Err(Error::EstimationUnavailable(
                "trailing linf norms are not strictly growing".into(),
            ));
        }
        if !(w[1].0 > w[0].0) {
            return Err(Error::EstimationUnavailable(
                "trailing sample times are not strictly increasing".into(),
            ));
        }
    }
    let expo = -(p - 1.0) / 2.0;
    let pts: Vec<(f64, f64)> = tail.iter().map(|&(t, a)| (t, a.powf(expo))).collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() <= f64::MIN_POSITIVE {
        return Err(Error::EstimationUnavailable("degenerate time window".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    if !(slope < 0.0) {
        return Err(Error::EstimationUnavailable(format!(
            "fitted slope {slope} is not negative"
        )));
    }
    let t_star = -intercept / slope;
    let t_last = tail.last().unwrap().0;
    if t_star < t_last {
        return Err(Error::EstimationUnavailable(format!(
            "fitted crossing {t_star} precedes the last sample {t_last}"
        )));
    }
    Ok(t_star)
}
