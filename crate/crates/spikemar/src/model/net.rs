//! Network definition and forward pass.
//!
//! Student activations carry `lanes = T` time-step lanes packed as row
//! blocks: a `[lanes*M x d]` tensor holds lane t in rows `t*M..(t+1)*M`.
//! Position-wise ops are lane-oblivious; the selective scan and the spike
//! sites are the only lane-aware pieces.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atmn::{spike_site, Injection, NeuronSpec, SpikeMode, SpikeTrain, SurrogateSpec};
use crate::energy::{Meter, PricedOp};
use crate::error::{Error, Result};
use crate::numerics::{GradTape, Tensor};

use super::params::{Lifted, ParamId, ParamSet};
use super::{ModelConfig, SpikeSite};

struct LayerIds {
    norm1: ParamId,
    w_in: ParamId,
    a_decay: ParamId,
    d_skip: ParamId,
    w_out: ParamId,
    norm2: ParamId,
    w_gate: ParamId,
    w_up: ParamId,
    w_down: ParamId,
    spike_a: BTreeMap<SpikeSite, ParamId>,
}

struct Layout {
    embed: ParamId,
    layers: Vec<LayerIds>,
    final_norm: ParamId,
    lm_head: ParamId,
}

/// Decoder in dense (teacher) or spiking (student) configuration.
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    layout: Layout,
}

/// Resolves parameter ids against either raw values or tape-lifted handles.
enum View<'a> {
    Raw(&'a ParamSet),
    Lifted(&'a Lifted),
}

impl View<'_> {
    fn get(&self, id: ParamId) -> &Tensor {
        match self {
            View::Raw(p) => p.get(id),
            View::Lifted(l) => l.get(id),
        }
    }
}

/// Per-layer record of the features the distillation losses consume.
pub struct LayerTrace {
    /// Input to the layer's first RMSNorm (the residual stream), one row
    /// block per time-step lane.
    pub pre_norm_input: Tensor,
    /// Output of the layer's second RMSNorm (the normalized FFN input).
    pub post_norm_feature: Tensor,
    /// Spike trains per enabled site (student only).
    pub spikes: Vec<(SpikeSite, SpikeTrain)>,
}

pub struct ForwardTrace {
    /// `[lanes*M x vocab]` causal logits.
    pub logits: Tensor,
    pub layers: Vec<LayerTrace>,
    pub lanes: usize,
    /// Sequence length M.
    pub positions: usize,
}

impl ForwardTrace {
    pub fn spike_train_count(&self) -> usize {
        self.layers.iter().map(|l| l.spikes.len()).sum()
    }

    /// Mean firing rate over every recorded train, `None` when no site fired.
    pub fn mean_firing_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self
            .layers
            .iter()
            .flat_map(|l| l.spikes.iter().map(|(_, t)| t.firing_rate()))
            .collect();
        if rates.is_empty() {
            None
        } else {
            Some(rates.iter().sum::<f64>() / rates.len() as f64)
        }
    }
}

impl Model {
    /// Builds the parameter layout, filling each tensor via `fill`.
    fn build(config: ModelConfig, mut fill: impl FnMut(&str, &[usize]) -> Vec<f64>) -> Result<Model> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut add = |params: &mut ParamSet, name: String, shape: Vec<usize>| -> Result<ParamId> {
            let data = fill(&name, &shape);
            params.insert(name, Tensor::new(shape, data)?)
        };
        let (v, d, h, n) = (config.vocab_size, config.d_model, config.n_heads, config.d_state);
        let proj_cols = h * (2 * n + 1);
        let embed = add(&mut params, "embed".into(), vec![v, d])?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let pre = format!("layers.{i}");
            let norm1 = add(&mut params, format!("{pre}.norm1"), vec![d])?;
            let w_in = add(&mut params, format!("{pre}.mixer.w_in"), vec![d, proj_cols])?;
            let a_decay = add(&mut params, format!("{pre}.mixer.a_decay"), vec![h])?;
            let d_skip = add(&mut params, format!("{pre}.mixer.d_skip"), vec![h])?;
            let w_out = add(&mut params, format!("{pre}.mixer.w_out"), vec![d, d])?;
            let norm2 = add(&mut params, format!("{pre}.norm2"), vec![d])?;
            let w_gate = add(&mut params, format!("{pre}.ffn.w_gate"), vec![d, config.d_ffn])?;
            let w_up = add(&mut params, format!("{pre}.ffn.w_up"), vec![d, config.d_ffn])?;
            let w_down = add(&mut params, format!("{pre}.ffn.w_down"), vec![config.d_ffn, d])?;
            let mut spike_a = BTreeMap::new();
            for &site in &config.spike_sites {
                let dim = match site {
                    SpikeSite::FfnOut => config.d_ffn,
                    _ => d,
                };
                let id = add(&mut params, format!("{pre}.spike.{}.a", site.name()), vec![dim])?;
                spike_a.insert(site, id);
            }
            layers.push(LayerIds {
                norm1,
                w_in,
                a_decay,
                d_skip,
                w_out,
                norm2,
                w_gate,
                w_up,
                w_down,
                spike_a,
            });
        }
        let final_norm = add(&mut params, "final_norm".into(), vec![d])?;
        let lm_head = add(&mut params, "lm_head".into(), vec![d, v])?;
        Ok(Model {
            config,
            params,
            layout: Layout {
                embed,
                layers,
                final_norm,
                lm_head,
            },
        })
    }

    /// Seeded random initialization.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a_init = config.a_init;
        Self::build(config, move |name, shape| {
            let numel: usize = shape.iter().product();
            if name.ends_with("norm1") || name.ends_with("norm2") || name.ends_with("final_norm") {
                vec![1.0; numel]
            } else if name.ends_with("a_decay") {
                vec![0.0; numel]
            } else if name.ends_with("d_skip") {
                vec![1.0; numel]
            } else if name.contains(".spike.") {
                vec![a_init; numel]
            } else {
                let std = if name == "embed" {
                    0.02
                } else {
                    1.0 / (shape[0] as f64).sqrt()
                };
                (0..numel).map(|_| std * normal(&mut rng)).collect()
            }
        })
    }

    /// Same layout with all-zero values (checkpoint loading target).
    pub(super) fn zeroed(config: ModelConfig) -> Result<Model> {
        Self::build(config, |_, shape| vec![0.0; shape.iter().product()])
    }

    /// Number of packed time-step lanes the forward pass runs.
    pub fn lanes(&self) -> usize {
        if self.config.spiking {
            self.config.t_steps
        } else {
            1
        }
    }

    pub fn lift(&self, tape: &GradTape, trainable: bool) -> Lifted {
        self.params.lift(tape, trainable)
    }

    /// Forward pass over tape-lifted parameters (training path).
    pub fn forward_taped(
        &self,
        tape: &GradTape,
        lifted: &Lifted,
        tokens: &[usize],
    ) -> Result<ForwardTrace> {
        self.forward_inner(tape, &View::Lifted(lifted), tokens, None)
    }

    /// Plain value forward (evaluation path).
    pub fn forward_values(&self, tokens: &[usize]) -> Result<ForwardTrace> {
        let tape = GradTape::new();
        self.forward_inner(&tape, &View::Raw(&self.params), tokens, None)
    }

    /// Value forward with operation counting. Embedding lookup and LM head
    /// are deliberately not charged: reports cover the decoder stack only.
    pub fn forward_metered(&self, tokens: &[usize], meter: &mut Meter) -> Result<ForwardTrace> {
        let tape = GradTape::new();
        self.forward_inner(&tape, &View::Raw(&self.params), tokens, Some(meter))
    }

    fn forward_inner(
        &self,
        tape: &GradTape,
        view: &View,
        tokens: &[usize],
        mut meter: Option<&mut Meter>,
    ) -> Result<ForwardTrace> {
        if tokens.is_empty() {
            return Err(Error::Input("empty token sequence".into()));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Input(format!(
                "token {bad} out of vocabulary (size {})",
                self.config.vocab_size
            )));
        }
        let m = tokens.len();
        let lanes = self.lanes();
        let embedded = tape.gather_rows(view.get(self.layout.embed), tokens)?;
        let mut x = if lanes > 1 {
            tape.tile_rows(&embedded, lanes)?
        } else {
            embedded
        };
        let mut layers = Vec::with_capacity(self.config.n_layers);
        for ids in &self.layout.layers {
            let (y, trace) = self.layer_forward(tape, view, ids, &x, lanes, meter.as_deref_mut())?;
            x = y;
            layers.push(trace);
        }
        let normed = tape.rmsnorm(&x, Some(view.get(self.layout.final_norm)), self.config.rms_eps)?;
        if let Some(mt) = meter.as_deref_mut() {
            mt.charge("final_norm", PricedOp::RmsNorm { elems: x.numel() })?;
        }
        let logits = tape.matmul(&normed, view.get(self.layout.lm_head))?;
        Ok(ForwardTrace {
            logits,
            layers,
            lanes,
            positions: m,
        })
    }

    fn layer_forward(
        &self,
        tape: &GradTape,
        view: &View,
        ids: &LayerIds,
        x: &Tensor,
        lanes: usize,
        mut meter: Option<&mut Meter>,
    ) -> Result<(Tensor, LayerTrace)> {
        let cfg = &self.config;
        let rows = x.leading();
        let (d, heads, n, p) = (cfg.d_model, cfg.n_heads, cfg.d_state, cfg.head_dim());
        let mut spikes = Vec::new();

        // mixer branch
        let n1 = tape.rmsnorm(x, Some(view.get(ids.norm1)), cfg.rms_eps)?;
        if let Some(mt) = meter.as_deref_mut() {
            mt.charge("norms", PricedOp::RmsNorm { elems: rows * d })?;
        }
        let (mixer_in, rate_in) = self.site(tape, view, ids, SpikeSite::MixerIn, n1, &mut spikes)?;
        let proj_cols = heads * (2 * n + 1);
        if let Some(mt) = meter.as_deref_mut() {
            mt.charge(
                "mixer_in_proj",
                PricedOp::Projection {
                    rows,
                    d_in: d,
                    d_out: proj_cols,
                    spike_rate: rate_in,
                },
            )?;
        }
        let proj = tape.matmul(&mixer_in, view.get(ids.w_in))?;
        let bmat = tape.slice_cols(&proj, 0, heads * n)?;
        let cmat = tape.slice_cols(&proj, heads * n, heads * n)?;
        let delta_raw = tape.slice_cols(&proj, 2 * heads * n, heads)?;
        let delta = tape.softplus(&delta_raw)?;
        // decay rate r = softplus(a) > 0, so alpha = exp(-r * delta) in (0,1)
        let decay_rate = tape.softplus(view.get(ids.a_decay))?;
        let alpha = tape.exp(&tape.scale(&tape.mul_cols(&delta, &decay_rate)?, -1.0)?)?;
        if let Some(mt) = meter.as_deref_mut() {
            mt.charge("elementwise", PricedOp::Transcendental { elems: 2 * rows * heads })?;
            mt.charge(
                "mixer_scan",
                PricedOp::Scan {
                    rows,
                    heads,
                    d_state: n,
                    head_dim: p,
                },
            )?;
        }
        let y = selective_scan(tape, &alpha, &bmat, &cmat, &mixer_in, view.get(ids.d_skip), lanes)?;
        let (mixer_out, rate_out) = self.site(tape, view, ids, SpikeSite::MixerOut, y, &mut spikes)?;
        if let Some(mt) = meter.as_deref_mut() {
            mt.charge(
                "mixer_out_proj",
                PricedOp::Projection {
                    rows,
                    d_in: d,
                    d_out: d,
                    spike_rate: rate_out,
                },
            )?;
        }
        let mixed = tape.matmul(&mixer_out, view.get(ids.w_out))?;
        let h1 = tape.add(x, &mixed)?;
        if let Some(mt) = meter.as_deref_mut() {
            mt.charge("residual", PricedOp::ResidualAdd { elems: rows * d })?;
        }

        // FFN branch
        let n2 = tape.rmsnorm(&h1, Some(view.get(ids.norm2)), cfg.rms_eps)?;
        if let Some(mt) = meter.as_deref_mut() {
            mt.charge("norms", PricedOp::RmsNorm { elems: rows * d })?;
        }
        let (ffn_in, rate_fin) = self.site(tape, view, ids, SpikeSite::FfnIn, n2.clone(), &mut spikes)?;
        if let Some(mt) = meter.as_deref_mut() {
            for comp in ["ffn_gate_proj", "ffn_up_proj"] {
                mt.charge(
                    comp,
                    PricedOp::Projection {
                        rows,
                        d_in: d,
                        d_out: cfg.d_ffn,
                        spike_rate: rate_fin,
                    },
                )?;
            }
            mt.charge("elementwise", PricedOp::Transcendental { elems: rows * cfg.d_ffn })?;
            mt.charge("elementwise", PricedOp::Elementwise { elems: rows * cfg.d_ffn })?;
        }
        let z = ffn_gated(tape, &ffn_in, view.get(ids.w_gate), view.get(ids.w_up))?;
        let (ffn_out, rate_fout) = self.site(tape, view, ids, SpikeSite::FfnOut, z, &mut spikes)?;
        if let Some(mt) = meter.as_deref_mut() {
            mt.charge(
                "ffn_down_proj",
                PricedOp::Projection {
                    rows,
                    d_in: cfg.d_ffn,
                    d_out: d,
                    spike_rate: rate_fout,
                },
            )?;
            mt.charge("residual", PricedOp::ResidualAdd { elems: rows * d })?;
        }
        let down = tape.matmul(&ffn_out, view.get(ids.w_down))?;
        let out = tape.add(&h1, &down)?;

        Ok((
            out,
            LayerTrace {
                pre_norm_input: x.clone(),
                post_norm_feature: n2,
                spikes,
            },
        ))
    }

    /// Applies the spiking neuron at `site` when enabled; identity otherwise.
    fn site(
        &self,
        tape: &GradTape,
        view: &View,
        ids: &LayerIds,
        site: SpikeSite,
        input: Tensor,
        spikes: &mut Vec<(SpikeSite, SpikeTrain)>,
    ) -> Result<(Tensor, Option<f64>)> {
        if !self.config.spike_sites.contains(&site) {
            return Ok((input, None));
        }
        let a = view.get(ids.spike_a[&site]);
        let v = tape.exp(a)?;
        let spec = NeuronSpec {
            kind: self.config.neuron,
            mode: SpikeMode::Discrete,
            injection: Injection::PerStep,
            tau: self.config.tau,
            t_steps: self.lanes(),
            surrogate: SurrogateSpec {
                width: self.config.surrogate_width,
            },
        };
        let (s, train) = spike_site(tape, &input, &v, &spec)?;
        let train = train.expect("discrete mode always yields a train");
        let rate = train.firing_rate();
        spikes.push((site, train));
        Ok((s, Some(rate)))
    }
}

/// Gated activation half of the FFN: `silu(x W_gate) * (x W_up)`.
fn ffn_gated(tape: &GradTape, x: &Tensor, w_gate: &Tensor, w_up: &Tensor) -> Result<Tensor> {
    let gate = tape.silu(&tape.matmul(x, w_gate)?)?;
    let up = tape.matmul(x, w_up)?;
    tape.mul(&gate, &up)
}

/// Full gated feed-forward: `(silu(x W_gate) * (x W_up)) W_down`.
pub fn ffn_forward(
    tape: &GradTape,
    x: &Tensor,
    w_gate: &Tensor,
    w_up: &Tensor,
    w_down: &Tensor,
) -> Result<Tensor> {
    tape.matmul(&ffn_gated(tape, x, w_gate, w_up)?, w_down)
}

/// Per-head selective-state recurrence over each lane:
/// `S_t = alpha_t * S_{t-1} + B_t (x_t)^T`, `y_t = S_t^T C_t + D * x_t`.
///
/// `alpha: [R x H]`, `b, c: [R x H*N]`, `x: [R x H*P]` (head-major columns),
/// `d_skip: [H]`; rows split into `lanes` independent segments.
pub fn selective_scan(
    tape: &GradTape,
    alpha: &Tensor,
    b: &Tensor,
    c: &Tensor,
    x: &Tensor,
    d_skip: &Tensor,
    lanes: usize,
) -> Result<Tensor> {
    const OP: &str = "selective_scan";
    let rows = x.leading();
    let heads = d_skip.numel();
    if heads == 0 || alpha.shape() != [rows, heads] {
        return Err(Error::ShapeMismatch {
            op: OP,
            left: alpha.shape().to_vec(),
            right: vec![rows, heads],
        });
    }
    let d = x.last_dim();
    if d % heads != 0 {
        return Err(Error::contract(OP, format!("{d} columns not divisible by {heads} heads")));
    }
    let p = d / heads;
    if b.shape() != c.shape() || b.leading() != rows || b.last_dim() % heads != 0 {
        return Err(Error::ShapeMismatch {
            op: OP,
            left: b.shape().to_vec(),
            right: c.shape().to_vec(),
        });
    }
    let n = b.last_dim() / heads;
    if lanes == 0 || rows % lanes != 0 {
        return Err(Error::contract(OP, format!("{rows} rows not divisible into {lanes} lanes")));
    }
    if alpha.data().iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::contract(OP, "decay alpha outside (0,1)"));
    }
    let rpl = rows / lanes;
    let dims = ScanDims { rows, heads, n, p, lanes, rpl };
    let (ad, bd, cd, xd, dd) = (
        alpha.data_arc(),
        b.data_arc(),
        c.data_arc(),
        x.data_arc(),
        d_skip.data_arc(),
    );
    let y = scan_forward(&ad, &bd, &cd, &xd, &dd, dims);
    let out = Tensor::from_parts(vec![rows, d], y);
    tape.custom_op(out, OP, &[alpha, b, c, x, d_skip], move |g| {
        let grads = scan_backward(&ad, &bd, &cd, &xd, &dd, dims, g);
        vec![
            Some(grads.alpha),
            Some(grads.b),
            Some(grads.c),
            Some(grads.x),
            Some(grads.d_skip),
        ]
    })
}

#[derive(Clone, Copy)]
struct ScanDims {
    rows: usize,
    heads: usize,
    n: usize,
    p: usize,
    lanes: usize,
    rpl: usize,
}

fn scan_forward(alpha: &[f64], b: &[f64], c: &[f64], x: &[f64], dsk: &[f64], dm: ScanDims) -> Vec<f64> {
    let d = dm.heads * dm.p;
    let bn = dm.heads * dm.n;
    let mut y = vec![0.0; dm.rows * d];
    let mut state = vec![0.0; dm.n * dm.p];
    for lane in 0..dm.lanes {
        for h in 0..dm.heads {
            state.iter_mut().for_each(|s| *s = 0.0);
            for t in 0..dm.rpl {
                let row = lane * dm.rpl + t;
                let a = alpha[row * dm.heads + h];
                let boff = row * bn + h * dm.n;
                let xoff = row * d + h * dm.p;
                for ni in 0..dm.n {
                    let bv = b[boff + ni];
                    let srow = &mut state[ni * dm.p..(ni + 1) * dm.p];
                    for (pi, s) in srow.iter_mut().enumerate() {
                        *s = a * *s + bv * x[xoff + pi];
                    }
                }
                let dv = dsk[h];
                for pi in 0..dm.p {
                    let mut acc = dv * x[xoff + pi];
                    for ni in 0..dm.n {
                        acc += state[ni * dm.p + pi] * c[boff + ni];
                    }
                    y[xoff + pi] = acc;
                }
            }
        }
    }
    y
}

struct ScanGrads {
    alpha: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    x: Vec<f64>,
    d_skip: Vec<f64>,
}

fn scan_backward(
    alpha: &[f64],
    b: &[f64],
    c: &[f64],
    x: &[f64],
    dsk: &[f64],
    dm: ScanDims,
    g: &[f64],
) -> ScanGrads {
    let d = dm.heads * dm.p;
    let bn = dm.heads * dm.n;
    let np = dm.n * dm.p;
    let mut ga = vec![0.0; dm.rows * dm.heads];
    let mut gb = vec![0.0; dm.rows * bn];
    let mut gc = vec![0.0; dm.rows * bn];
    let mut gx = vec![0.0; dm.rows * d];
    let mut gd = vec![0.0; dm.heads];
    // states[t*np..] is S_{t-1}; one extra slot holds the final state
    let mut states = vec![0.0; (dm.rpl + 1) * np];
    let mut shat = vec![0.0; np];
    for lane in 0..dm.lanes {
        for h in 0..dm.heads {
            // recompute forward states for this lane/head
            states[..np].iter_mut().for_each(|s| *s = 0.0);
            for t in 0..dm.rpl {
                let row = lane * dm.rpl + t;
                let a = alpha[row * dm.heads + h];
                let boff = row * bn + h * dm.n;
                let xoff = row * d + h * dm.p;
                let (prev, next) = states[t * np..(t + 2) * np].split_at_mut(np);
                for ni in 0..dm.n {
                    let bv = b[boff + ni];
                    for pi in 0..dm.p {
                        next[ni * dm.p + pi] = a * prev[ni * dm.p + pi] + bv * x[xoff + pi];
                    }
                }
            }
            // reverse sweep
            shat.iter_mut().for_each(|s| *s = 0.0);
            for t in (0..dm.rpl).rev() {
                let row = lane * dm.rpl + t;
                let a = alpha[row * dm.heads + h];
                let boff = row * bn + h * dm.n;
                let xoff = row * d + h * dm.p;
                let gt = &g[xoff..xoff + dm.p];
                let s_t = &states[(t + 1) * np..(t + 2) * np];
                let s_prev = &states[t * np..(t + 1) * np];
                // skip path
                for pi in 0..dm.p {
                    gd[h] += gt[pi] * x[xoff + pi];
                    gx[xoff + pi] += dsk[h] * gt[pi];
                }
                // dC_t[n] = sum_p S_t[n,p] g_t[p]; shat += C_t (x) g_t
                for ni in 0..dm.n {
                    let cv = c[boff + ni];
                    let mut acc = 0.0;
                    for pi in 0..dm.p {
                        acc += s_t[ni * dm.p + pi] * gt[pi];
                        shat[ni * dm.p + pi] += cv * gt[pi];
                    }
                    gc[boff + ni] = acc;
                }
                // dalpha_t = <shat, S_{t-1}>; dB_t = shat . x_t; dx_t += shat^T B_t
                let mut da = 0.0;
                for ni in 0..dm.n {
                    let bv = b[boff + ni];
                    let mut accb = 0.0;
                    for pi in 0..dm.p {
                        let sh = shat[ni * dm.p + pi];
                        da += sh * s_prev[ni * dm.p + pi];
                        accb += sh * x[xoff + pi];
                        gx[xoff + pi] += sh * bv;
                    }
                    gb[boff + ni] = accb;
                }
                ga[row * dm.heads + h] = da;
                // propagate to t-1
                shat.iter_mut().for_each(|s| *s *= a);
            }
        }
    }
    ScanGrads {
        alpha: ga,
        b: gb,
        c: gc,
        x: gx,
        d_skip: gd,
    }
}

/// Mean of the per-lane logit blocks: rate decoding to `[M x vocab]`.
pub fn rate_decoded_logits(trace: &ForwardTrace) -> Tensor {
    let lanes = trace.lanes;
    let block = trace.positions * trace.logits.last_dim();
    let data = trace.logits.data();
    let mut out = vec![0.0; block];
    for lane in 0..lanes {
        for i in 0..block {
            out[i] += data[lane * block + i];
        }
    }
    for v in &mut out {
        *v /= lanes as f64;
    }
    Tensor::from_parts(vec![trace.positions, trace.logits.last_dim()], out)
}

/// Fraction of positions where the argmax logit hits the target token.
pub fn next_token_accuracy(logits: &Tensor, targets: &[usize]) -> f64 {
    let d = logits.last_dim();
    let rows = logits.leading();
    assert_eq!(rows, targets.len(), "one target per position");
    let mut hits = 0usize;
    for (r, &t) in targets.iter().enumerate() {
        let row = &logits.data()[r * d..(r + 1) * d];
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .expect("non-empty row");
        if argmax == t {
            hits += 1;
        }
    }
    hits as f64 / rows.max(1) as f64
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0,1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
