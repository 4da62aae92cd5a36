//! Adaptive ternary multi-step neurons.
//!
//! The neuron integrates an input current into a leaky membrane and emits
//! +1 / -1 when the pre-reset potential crosses +V / -V, where V = exp(a)
//! is a per-channel trainable threshold. A binary variant (positive
//! threshold only, spikes in {0,1}) serves as the ablation baseline.
//!
//! Dynamics per step:
//!   h_t = inject(t) + u_{t-1} / tau
//!   s_t = spike(h_t, V)
//!   u_t = h_t - s_t * V
//!
//! Training backpropagates through the hard threshold with a rectangular
//! surrogate window around each threshold; the reset path uses the exact
//! piecewise-linear gradient (s treated as emitted). The smoothed mode
//! replaces the spike with the surrogate's primitive (a ramp), giving a
//! differentiable twin whose finite differences the backward pass must
//! reproduce — that is the oracle the gradient tests target.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{GradTape, Tensor};

/// Rectangular surrogate: gradient 1/(2*width) inside |h -+ V| <= width.
#[derive(Clone, Copy, Debug)]
pub struct SurrogateSpec {
    pub width: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec { width: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    /// Spikes in {-1, 0, +1} with thresholds at +-V.
    Ternary,
    /// Spikes in {0, 1}; negative potentials never fire.
    Binary,
}

/// How input current reaches the membrane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Injection {
    /// External current enters only at t = 0; later steps see pure decay.
    Initial,
    /// One input frame per step, each treated as a fresh injection
    /// (stacked spiking layers inside the model use this).
    PerStep,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpikeMode {
    /// Hard thresholds, integer spike values.
    Discrete,
    /// Spike replaced by the surrogate primitive (linear ramp at each
    /// threshold); used only as the finite-difference oracle target.
    Smoothed,
}

/// Trainable threshold parameter and shared neuron constants.
#[derive(Clone, Debug)]
pub struct AtmnParams {
    /// Per-channel threshold parameter; V = exp(a).
    pub a: Tensor,
    /// Membrane time constant, > 0.
    pub tau: f64,
    /// Number of time steps, >= 1.
    pub t_steps: usize,
}

impl AtmnParams {
    pub fn new(a: Tensor, tau: f64, t_steps: usize) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::contract("AtmnParams", format!("tau must be > 0, got {tau}")));
        }
        if t_steps == 0 {
            return Err(Error::contract("AtmnParams", "t_steps must be >= 1"));
        }
        Ok(AtmnParams { a, tau, t_steps })
    }

    /// Uniform threshold parameter `a` across `channels`.
    pub fn uniform(a: f64, channels: usize, tau: f64, t_steps: usize) -> Result<Self> {
        Self::new(Tensor::full(vec![channels], a)?, tau, t_steps)
    }
}

/// The adaptive threshold V = exp(a), strictly positive by construction.
pub fn atmn_threshold(params: &AtmnParams) -> Tensor {
    Tensor::from_parts(
        params.a.shape().to_vec(),
        params.a.data().iter().map(|&a| a.exp()).collect(),
    )
}

/// Ternary spike train over T steps with cached firing statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTrain {
    /// Shape [T, rows, channels].
    pub shape: [usize; 3],
    pub values: Vec<i8>,
    firing_rate: f64,
}

impl SpikeTrain {
    fn from_values(shape: [usize; 3], values: Vec<i8>) -> Self {
        debug_assert!(values.iter().all(|&v| (-1..=1).contains(&v)));
        let mut train = SpikeTrain { shape, values, firing_rate: 0.0 };
        train.firing_rate = train.recompute_firing_rate();
        train
    }

    /// Fraction of nonzero entries across all steps and elements.
    pub fn firing_rate(&self) -> f64 {
        self.firing_rate
    }

    /// Recounts nonzero entries; must equal the cached rate exactly.
    pub fn recompute_firing_rate(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let nonzero = self.values.iter().filter(|&&v| v != 0).count();
        nonzero as f64 / self.values.len() as f64
    }

    pub fn t_steps(&self) -> usize {
        self.shape[0]
    }

    pub fn frame(&self, t: usize) -> &[i8] {
        let per = self.shape[1] * self.shape[2];
        &self.values[t * per..(t + 1) * per]
    }
}

/// Saved forward state: everything the backward pass needs.
#[derive(Clone, Debug)]
pub struct AtmnRun {
    pub kind: NeuronKind,
    pub mode: SpikeMode,
    pub injection: Injection,
    pub tau: f64,
    pub t_steps: usize,
    pub rows: usize,
    pub channels: usize,
    /// Threshold values per channel at forward time.
    pub v: Vec<f64>,
    /// Pre-reset potentials, flat [T * rows * channels].
    pub h: Vec<f64>,
    /// Post-reset potentials, flat [T * rows * channels].
    pub u: Vec<f64>,
    /// Emitted spikes (integer-valued in discrete mode), flat.
    pub s: Vec<f64>,
    /// Surrogate width used by the smoothed forward (mirrored into backward).
    pub width: f64,
}

impl AtmnRun {
    /// Emitted values as a `[T*rows, channels]` tensor.
    pub fn output(&self) -> Tensor {
        Tensor::from_parts(vec![self.t_steps * self.rows, self.channels], self.s.clone())
    }

    /// Discrete-mode spike train; panics in smoothed mode.
    pub fn train(&self) -> SpikeTrain {
        assert_eq!(self.mode, SpikeMode::Discrete, "smoothed runs have no spike train");
        let values = self.s.iter().map(|&v| v as i8).collect();
        SpikeTrain::from_values([self.t_steps, self.rows, self.channels], values)
    }
}

fn emit(kind: NeuronKind, mode: SpikeMode, h: f64, v: f64, w: f64) -> f64 {
    match (kind, mode) {
        (NeuronKind::Ternary, SpikeMode::Discrete) => {
            if h >= v {
                1.0
            } else if h <= -v {
                -1.0
            } else {
                0.0
            }
        }
        (NeuronKind::Binary, SpikeMode::Discrete) => {
            if h >= v {
                1.0
            } else {
                0.0
            }
        }
        (NeuronKind::Ternary, SpikeMode::Smoothed) => ramp(h, v, w) - ramp(-h, v, w),
        (NeuronKind::Binary, SpikeMode::Smoothed) => ramp(h, v, w),
    }
}

/// Primitive of the rectangular surrogate at the positive threshold:
/// 0 below V-w, 1 above V+w, linear in between.
fn ramp(h: f64, v: f64, w: f64) -> f64 {
    ((h - v + w) / (2.0 * w)).clamp(0.0, 1.0)
}

fn in_window(z: f64, w: f64) -> bool {
    z.abs() <= w
}

/// d spike / d h under the surrogate.
fn sigma_h(kind: NeuronKind, h: f64, v: f64, w: f64) -> f64 {
    let g = 1.0 / (2.0 * w);
    match kind {
        NeuronKind::Ternary => {
            let mut d = 0.0;
            if in_window(h - v, w) {
                d += g;
            }
            if in_window(h + v, w) {
                d += g;
            }
            d
        }
        NeuronKind::Binary => {
            if in_window(h - v, w) {
                g
            } else {
                0.0
            }
        }
    }
}

/// d spike / d V under the surrogate.
fn sigma_v(kind: NeuronKind, h: f64, v: f64, w: f64) -> f64 {
    let g = 1.0 / (2.0 * w);
    match kind {
        NeuronKind::Ternary => {
            let mut d = 0.0;
            if in_window(h - v, w) {
                d -= g;
            }
            if in_window(h + v, w) {
                d += g;
            }
            d
        }
        NeuronKind::Binary => {
            if in_window(h - v, w) {
                -g
            } else {
                0.0
            }
        }
    }
}

/// Core T-step recurrence shared by every public entry point.
fn run_neuron(
    input: &Tensor,
    v: &[f64],
    tau: f64,
    t_steps: usize,
    kind: NeuronKind,
    mode: SpikeMode,
    injection: Injection,
    width: f64,
) -> Result<AtmnRun> {
    const OP: &str = "atmn_forward";
    let channels = input.last_dim();
    if channels != v.len() {
        return Err(Error::ShapeMismatch {
            op: OP,
            left: input.shape().to_vec(),
            right: vec![v.len()],
        });
    }
    if !input.data().iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { op: OP });
    }
    let in_rows = input.leading();
    let rows = match injection {
        Injection::Initial => in_rows,
        Injection::PerStep => {
            if in_rows % t_steps != 0 {
                return Err(Error::contract(
                    OP,
                    format!("{in_rows} input rows not divisible into {t_steps} frames"),
                ));
            }
            in_rows / t_steps
        }
    };
    let per = rows * channels;
    let data = input.data();
    let mut h = vec![0.0; t_steps * per];
    let mut u = vec![0.0; t_steps * per];
    let mut s = vec![0.0; t_steps * per];
    for e in 0..per {
        let vc = v[e % channels];
        let mut mem = 0.0;
        for t in 0..t_steps {
            let inj = match injection {
                Injection::Initial => {
                    if t == 0 {
                        data[e]
                    } else {
                        0.0
                    }
                }
                Injection::PerStep => data[t * per + e],
            };
            let ht = inj + mem / tau;
            let st = emit(kind, mode, ht, vc, width);
            mem = ht - st * vc;
            h[t * per + e] = ht;
            s[t * per + e] = st;
            u[t * per + e] = mem;
        }
    }
    Ok(AtmnRun {
        kind,
        mode,
        injection,
        tau,
        t_steps,
        rows,
        channels,
        v: v.to_vec(),
        h,
        u,
        s,
        width,
    })
}

/// Eq.-literal forward: input current injected at t = 0 only, ternary
/// spikes emitted over T steps.
pub fn atmn_forward(input: &Tensor, params: &AtmnParams) -> Result<SpikeTrain> {
    Ok(atmn_forward_run(input, params)?.train())
}

/// As [`atmn_forward`] but returns the full membrane trace.
pub fn atmn_forward_run(input: &Tensor, params: &AtmnParams) -> Result<AtmnRun> {
    let v = atmn_threshold(params);
    run_neuron(
        input,
        v.data(),
        params.tau,
        params.t_steps,
        NeuronKind::Ternary,
        SpikeMode::Discrete,
        Injection::Initial,
        SurrogateSpec::default().width,
    )
}

/// Differentiable twin: the spike replaced by the surrogate's primitive.
pub fn atmn_forward_smoothed(
    input: &Tensor,
    params: &AtmnParams,
    surrogate: SurrogateSpec,
) -> Result<AtmnRun> {
    let v = atmn_threshold(params);
    run_neuron(
        input,
        v.data(),
        params.tau,
        params.t_steps,
        NeuronKind::Ternary,
        SpikeMode::Smoothed,
        Injection::Initial,
        surrogate.width,
    )
}

/// Binary LIF baseline: positive threshold only, spikes in {0, 1}. The
/// negative half of the signal is discarded.
pub fn binary_lif_forward(input: &Tensor, params: &AtmnParams) -> Result<SpikeTrain> {
    let v = atmn_threshold(params);
    let run = run_neuron(
        input,
        v.data(),
        params.tau,
        params.t_steps,
        NeuronKind::Binary,
        SpikeMode::Discrete,
        Injection::Initial,
        SurrogateSpec::default().width,
    )?;
    Ok(run.train())
}

fn backward_core(run: &AtmnRun, spike_grad: &[f64], width: f64) -> (Vec<f64>, Vec<f64>) {
    let per = run.rows * run.channels;
    debug_assert_eq!(spike_grad.len(), run.t_steps * per);
    let in_frames = match run.injection {
        Injection::Initial => 1,
        Injection::PerStep => run.t_steps,
    };
    let mut input_grad = vec![0.0; in_frames * per];
    let mut v_grad = vec![0.0; run.channels];
    for e in 0..per {
        let c = e % run.channels;
        let vc = run.v[c];
        let mut du = 0.0;
        for t in (0..run.t_steps).rev() {
            let ht = run.h[t * per + e];
            let st = run.s[t * per + e];
            let gs = spike_grad[t * per + e];
            let sh = sigma_h(run.kind, ht, vc, width);
            let sv = sigma_v(run.kind, ht, vc, width);
            let (dh, dv) = match run.mode {
                // reset uses the exact piecewise-linear gradient given s
                SpikeMode::Discrete => (gs * sh + du, gs * sv + du * (-st)),
                // exact gradient of the smoothed computation
                SpikeMode::Smoothed => (
                    gs * sh + du * (1.0 - vc * sh),
                    gs * sv + du * (-st - vc * sv),
                ),
            };
            v_grad[c] += dv;
            match run.injection {
                Injection::PerStep => input_grad[t * per + e] = dh,
                Injection::Initial => {
                    if t == 0 {
                        input_grad[e] = dh;
                    }
                }
            }
            du = dh / run.tau;
        }
    }
    (input_grad, v_grad)
}

/// Surrogate-gradient backward pass for a saved forward run.
///
/// `spike_grad` is the loss gradient w.r.t. the emitted train, flat over
/// [T*rows, channels]. Returns gradients w.r.t. the input current and the
/// threshold parameter `a` (chained through V = exp(a)). For smoothed runs
/// pass the same width the forward used.
pub fn atmn_backward(
    spike_grad: &Tensor,
    saved: Option<&AtmnRun>,
    surrogate: SurrogateSpec,
) -> Result<(Tensor, Tensor)> {
    const OP: &str = "atmn_backward";
    let run = saved.ok_or_else(|| Error::contract(OP, "missing saved forward state"))?;
    let per = run.rows * run.channels;
    if spike_grad.numel() != run.t_steps * per {
        return Err(Error::contract(
            OP,
            format!(
                "spike_grad has {} values, run produced {}",
                spike_grad.numel(),
                run.t_steps * per
            ),
        ));
    }
    let (input_grad, v_grad) = backward_core(run, spike_grad.data(), surrogate.width);
    let in_rows = input_grad.len() / run.channels;
    // dL/da = dL/dV * dV/da = dL/dV * V
    let a_grad: Vec<f64> = v_grad.iter().zip(&run.v).map(|(g, v)| g * v).collect();
    Ok((
        Tensor::from_parts(vec![in_rows, run.channels], input_grad),
        Tensor::from_parts(vec![run.channels], a_grad),
    ))
}

/// Tape-integrated spike site used by the model. `input` is `[rows x C]`
/// (Initial) or `[T*rows x C]` (PerStep); `v` is the per-channel threshold,
/// typically `tape.exp(a)` so the threshold parameter trains. Returns the
/// emitted frames as `[T*rows x C]` plus the spike train in discrete mode.
pub struct NeuronSpec {
    pub kind: NeuronKind,
    pub mode: SpikeMode,
    pub injection: Injection,
    pub tau: f64,
    pub t_steps: usize,
    pub surrogate: SurrogateSpec,
}

pub fn spike_site(
    tape: &GradTape,
    input: &Tensor,
    v: &Tensor,
    spec: &NeuronSpec,
) -> Result<(Tensor, Option<SpikeTrain>)> {
    let run = run_neuron(
        input,
        v.data(),
        spec.tau,
        spec.t_steps,
        spec.kind,
        spec.mode,
        spec.injection,
        spec.surrogate.width,
    )?;
    let train = match spec.mode {
        SpikeMode::Discrete => Some(run.train()),
        SpikeMode::Smoothed => None,
    };
    let out = run.output();
    let run = Arc::new(run);
    let width = spec.surrogate.width;
    let taped = tape.custom_op(out, "spike_site", &[input, v], move |g| {
        let (gi, gv) = backward_core(&run, g, width);
        vec![Some(gi), Some(gv)]
    })?;
    Ok((taped, train))
}
