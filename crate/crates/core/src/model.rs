//! The forecasting network: prompt projection, prompt-aware gated fusion,
//! a pre-norm transformer encoder and an autoregressive residual decoder.
//!
//! Graph-building functions take a [`Tape`] and [`BoundParams`] so training
//! and inference share one code path. [`TyphoFormer`] wraps them for plain
//! value-in, value-out use.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::features::{NormalizationStats, Window, FEATURE_DIM, LAT, LON};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("parameter {name}: {reason}")]
    Params { name: String, reason: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// How prompt embeddings enter the fusion gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PromptMode {
    /// The last input record's prompt, shared by every time step.
    #[default]
    Last,
    /// Each time step fuses its own record's prompt.
    PerStep,
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "last" => Ok(PromptMode::Last),
            "per_step" => Ok(PromptMode::PerStep),
            other => Err(format!("prompt_mode must be last or per_step, got {other:?}")),
        }
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptMode::Last => "last",
            PromptMode::PerStep => "per_step",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_feat: usize,
    pub d_txt: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub history: usize,
    pub horizons: usize,
    pub layer_norm_eps: f64,
    pub prompt_mode: PromptMode,
    /// Add sinusoidal positions after the input projection.
    pub positional_encoding: bool,
    /// When false the fusion gate is bypassed and the encoder sees raw features.
    pub use_prompt: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_feat: FEATURE_DIM,
            d_txt: 64,
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            d_ff: 128,
            history: 8,
            horizons: 4,
            layer_norm_eps: 1e-5,
            prompt_mode: PromptMode::Last,
            positional_encoding: true,
            use_prompt: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_feat", self.d_feat),
            ("d_txt", self.d_txt),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("history", self.history),
            ("horizons", self.horizons),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(ModelError::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Xavier,
    Zeros,
    Ones,
}

fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (df, dt, dm, dff) = (cfg.d_feat, cfg.d_txt, cfg.d_model, cfg.d_ff);
    let mut specs = vec![
        ("prompt.w".to_string(), vec![dt, df], Init::Xavier),
        ("prompt.b".to_string(), vec![df], Init::Zeros),
        ("pgf.w_g".to_string(), vec![2 * df, df], Init::Xavier),
        ("pgf.b_g".to_string(), vec![df], Init::Zeros),
        ("input.w".to_string(), vec![df, dm], Init::Xavier),
        ("input.b".to_string(), vec![dm], Init::Zeros),
    ];
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("layer{l}.{s}");
        specs.extend([
            (p("ln1.gamma"), vec![dm], Init::Ones),
            (p("ln1.beta"), vec![dm], Init::Zeros),
            (p("attn.w_q"), vec![dm, dm], Init::Xavier),
            (p("attn.w_k"), vec![dm, dm], Init::Xavier),
            (p("attn.w_v"), vec![dm, dm], Init::Xavier),
            (p("attn.w_o"), vec![dm, dm], Init::Xavier),
            (p("ln2.gamma"), vec![dm], Init::Ones),
            (p("ln2.beta"), vec![dm], Init::Zeros),
            (p("ffn.w1"), vec![dm, dff], Init::Xavier),
            (p("ffn.b1"), vec![dff], Init::Zeros),
            (p("ffn.w2"), vec![dff, dm], Init::Xavier),
            (p("ffn.b2"), vec![dm], Init::Zeros),
        ]);
    }
    specs.extend([
        ("decoder.w1".to_string(), vec![2 + dm, dm], Init::Xavier),
        ("decoder.b1".to_string(), vec![dm], Init::Zeros),
        // zero output layer: the untrained model forecasts persistence
        ("decoder.w2".to_string(), vec![dm, 2], Init::Zeros),
        ("decoder.b2".to_string(), vec![2], Init::Zeros),
    ]);
    specs
}

/// All trainable tensors, addressed by dotted name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    /// Xavier-uniform matrices, zero biases, unit layer-norm scales and a zero
    /// decoder output layer.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in param_specs(cfg) {
            let t = match init {
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::filled(&shape, 1.0),
                Init::Xavier => {
                    let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    let data = (0..shape[0] * shape[1])
                        .map(|_| rng.gen_range(-limit..limit))
                        .collect();
                    Tensor::new(shape, data)?
                }
            };
            tensors.insert(name, t);
        }
        Ok(Self { tensors })
    }

    pub fn from_tensors(tensors: BTreeMap<String, Tensor>) -> Self {
        Self { tensors }
    }

    /// Checks that exactly the expected names and shapes are present.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let specs = param_specs(cfg);
        for (name, shape, _) in &specs {
            let t = self.tensors.get(name).ok_or_else(|| ModelError::Params {
                name: name.clone(),
                reason: "missing".into(),
            })?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Params {
                    name: name.clone(),
                    reason: format!("shape {:?}, expected {shape:?}", t.shape()),
                });
            }
            if !t.is_finite() {
                return Err(ModelError::Params {
                    name: name.clone(),
                    reason: "non-finite values".into(),
                });
            }
        }
        if let Some(extra) = self
            .tensors
            .keys()
            .find(|k| !specs.iter().any(|(n, _, _)| n == *k))
        {
            return Err(ModelError::Params {
                name: extra.clone(),
                reason: "unexpected parameter".into(),
            });
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
                .collect(),
        }
    }
}

/// Parameter leaves of one tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    /// Uses `var` for parameter `name` instead of its own leaf. Handy for
    /// finite-difference checks on one tensor at a time.
    pub fn replace(&mut self, name: &str, var: Var) -> Option<Var> {
        self.vars.get_mut(name).map(|slot| std::mem::replace(slot, var))
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// `x W + b` for `x: [n, in]`.
fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    Ok(tape.add(xw, b)?)
}

/// Maps mean prompt embeddings (`[n, d_txt]`) into feature space (`[n, d_feat]`).
pub fn project_prompt(tape: &mut Tape, p: &BoundParams, prompt: Var) -> Result<Var> {
    linear(tape, prompt, p.var("prompt.w"), p.var("prompt.b"))
}

/// Gated fusion: `g = σ(W_g [x_t; p] + b_g)`, output `g ⊙ x_t + (1 − g) ⊙ p`,
/// with one gate vector per time step used in both terms. `prompt` is either
/// a single `[1, d]` row shared by all steps or a `[T, d]` matrix.
pub fn pgf_fuse(tape: &mut Tape, p: &BoundParams, x: Var, prompt: Var) -> Result<Var> {
    let steps = tape.shape(x)[0];
    let rows = if tape.shape(prompt)[0] == steps {
        prompt
    } else {
        tape.repeat_rows(prompt, steps)?
    };
    let joined = tape.concat(x, rows)?;
    let pre = linear(tape, joined, p.var("pgf.w_g"), p.var("pgf.b_g"))?;
    let gate = tape.sigmoid(pre);
    let keep = tape.mul(gate, x)?;
    let inv = tape.affine(gate, -1.0, 1.0);
    let blend = tape.mul(inv, rows)?;
    Ok(tape.add(keep, blend)?)
}

pub fn positional_encoding(steps: usize, d_model: usize) -> Tensor {
    let mut data = vec![0.0; steps * d_model];
    for t in 0..steps {
        for i in 0..d_model {
            let pair = (i / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
            data[t * d_model + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![steps, d_model], data).expect("consistent shape")
}

fn layer_norm_affine(tape: &mut Tape, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
    let n = tape.layer_norm(x, eps);
    let scaled = tape.mul(n, gamma)?;
    Ok(tape.add(scaled, beta)?)
}

fn self_attention(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &ModelConfig,
    layer: usize,
    x: Var,
    maps: &mut Vec<Var>,
) -> Result<Var> {
    let name = |s: &str| format!("layer{layer}.attn.{s}");
    let q = tape.matmul(x, p.var(&name("w_q")))?;
    let k = tape.matmul(x, p.var(&name("w_k")))?;
    let v = tape.matmul(x, p.var(&name("w_v")))?;
    let dh = cfg.d_head();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads: Option<Var> = None;
    for h in 0..cfg.n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let weights = tape.softmax(scores);
        maps.push(weights);
        let out = tape.matmul(weights, vh)?;
        heads = Some(match heads {
            None => out,
            Some(acc) => tape.concat(acc, out)?,
        });
    }
    Ok(tape.matmul(heads.expect("n_heads > 0"), p.var(&name("w_o")))?)
}

/// Encoder output plus the attention weights of every layer and head, in
/// `layer * n_heads + head` order.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub hidden: Var,
    pub attention: Vec<Var>,
}

/// Input projection, optional sinusoidal positions, then pre-norm blocks
/// `h += MHSA(LN(h)); h += FFN(LN(h))` with full (unmasked) attention.
pub fn encode(tape: &mut Tape, p: &BoundParams, cfg: &ModelConfig, z: Var) -> Result<EncoderVars> {
    let steps = tape.shape(z)[0];
    let mut h = linear(tape, z, p.var("input.w"), p.var("input.b"))?;
    if cfg.positional_encoding {
        let pe = tape.leaf(positional_encoding(steps, cfg.d_model));
        h = tape.add(h, pe)?;
    }
    let mut attention = Vec::with_capacity(cfg.n_layers * cfg.n_heads);
    for l in 0..cfg.n_layers {
        let name = |s: &str| format!("layer{l}.{s}");
        let n1 = layer_norm_affine(
            tape,
            h,
            p.var(&name("ln1.gamma")),
            p.var(&name("ln1.beta")),
            cfg.layer_norm_eps,
        )?;
        let a = self_attention(tape, p, cfg, l, n1, &mut attention)?;
        h = tape.add(h, a)?;
        let n2 = layer_norm_affine(
            tape,
            h,
            p.var(&name("ln2.gamma")),
            p.var(&name("ln2.beta")),
            cfg.layer_norm_eps,
        )?;
        let f = linear(tape, n2, p.var(&name("ffn.w1")), p.var(&name("ffn.b1")))?;
        let f = tape.relu(f);
        let f = linear(tape, f, p.var(&name("ffn.w2")), p.var(&name("ffn.b2")))?;
        h = tape.add(h, f)?;
    }
    Ok(EncoderVars { hidden: h, attention })
}

/// Autoregressive residual decoder. Starting from `last_pos` (`[1, 2]`,
/// normalized), each step computes `δ = MLP([ŷ_prev; h_T])` and emits
/// `ŷ = ŷ_prev + δ`. Returns `[horizons, 2]`.
pub fn decode(
    tape: &mut Tape,
    p: &BoundParams,
    h_last: Var,
    last_pos: Var,
    horizons: usize,
) -> Result<Var> {
    let mut prev = last_pos;
    let mut steps = Vec::with_capacity(horizons);
    for _ in 0..horizons {
        let inp = tape.concat(prev, h_last)?;
        let hid = linear(tape, inp, p.var("decoder.w1"), p.var("decoder.b1"))?;
        let hid = tape.tanh(hid);
        let delta = linear(tape, hid, p.var("decoder.w2"), p.var("decoder.b2"))?;
        prev = tape.add(prev, delta)?;
        steps.push(prev);
    }
    Ok(tape.concat_rows(&steps)?)
}

/// Model-ready tensors for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[T, d_feat]` normalized features.
    pub features: Tensor,
    /// `[1, d_txt]` or `[T, d_txt]` mean prompt embeddings.
    pub prompt: Tensor,
    /// Normalized (lat, lon) of the last input fix.
    pub last_norm: [f64; 2],
    /// Degrees of the last input fix.
    pub last_deg: (f64, f64),
    /// `[K, 2]` normalized targets, when known.
    pub target_norm: Option<Tensor>,
}

impl Sample {
    pub fn new(window: &Window, prompt: Tensor, stats: &NormalizationStats) -> Self {
        let rows: Vec<[f64; FEATURE_DIM]> = window.inputs.iter().map(|f| stats.normalize(f)).collect();
        let (lat, lon) = window.last_position();
        let targets: Vec<[f64; 2]> = window
            .targets
            .iter()
            .map(|&(a, o)| stats.normalize_position(a, o))
            .collect();
        Self {
            features: Tensor::from_rows(&rows),
            prompt,
            last_norm: stats.normalize_position(lat, lon),
            last_deg: (lat, lon),
            target_norm: (!targets.is_empty()).then(|| Tensor::from_rows(&targets)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub fused: Var,
    pub encoded: EncoderVars,
    /// `[K, 2]` normalized positions.
    pub prediction: Var,
}

/// Builds the full forward graph for one sample.
pub fn forward_graph(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &ModelConfig,
    sample: &Sample,
) -> Result<ForwardVars> {
    let x = tape.leaf(sample.features.clone());
    let fused = if cfg.use_prompt {
        let prompt = tape.leaf(sample.prompt.clone());
        let projected = project_prompt(tape, p, prompt)?;
        pgf_fuse(tape, p, x, projected)?
    } else {
        x
    };
    let encoded = encode(tape, p, cfg, fused)?;
    let steps = tape.shape(encoded.hidden)[0];
    let h_last = tape.slice_rows(encoded.hidden, steps - 1, steps)?;
    let last = tape.leaf(Tensor::new(vec![1, 2], sample.last_norm.to_vec())?);
    let prediction = decode(tape, p, h_last, last, cfg.horizons)?;
    Ok(ForwardVars {
        fused,
        encoded,
        prediction,
    })
}

/// Converts normalized decoder output back to degrees relative to the last
/// observed fix, so a zero residual reproduces that fix exactly.
pub fn to_degrees(pred_norm: &Tensor, sample: &Sample, stats: &NormalizationStats) -> Vec<(f64, f64)> {
    let [lat0, lon0] = sample.last_norm;
    (0..pred_norm.rows())
        .map(|k| {
            let dlat = (pred_norm.at(k, 0) - lat0) * stats.std[LAT];
            let dlon = (pred_norm.at(k, 1) - lon0) * stats.std[LON];
            (sample.last_deg.0 + dlat, sample.last_deg.1 + dlon)
        })
        .collect()
}

/// Configured network with value-level entry points.
#[derive(Debug, Clone)]
pub struct TyphoFormer {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl TyphoFormer {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.validate(&config)?;
        Ok(Self { config, params })
    }

    pub fn project_prompt(&self, p_mean_txt: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let v = tape.leaf(Tensor::new(vec![1, p_mean_txt.len()], p_mean_txt.to_vec())?);
        let out = project_prompt(&mut tape, &b, v)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn pgf_fuse(&self, x: &Tensor, p_mean: &[f64]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let pv = tape.leaf(Tensor::new(vec![1, p_mean.len()], p_mean.to_vec())?);
        let out = pgf_fuse(&mut tape, &b, xv, pv)?;
        Ok(tape.value(out).clone())
    }

    /// Hidden states `[T, d_model]` and attention maps.
    pub fn encode(&self, z: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let zv = tape.leaf(z.clone());
        let enc = encode(&mut tape, &b, &self.config, zv)?;
        let maps = enc.attention.iter().map(|&v| tape.value(v).clone()).collect();
        Ok((tape.value(enc.hidden).clone(), maps))
    }

    pub fn decode(&self, h_last: &[f64], last_pos: [f64; 2], horizons: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let h = tape.leaf(Tensor::new(vec![1, h_last.len()], h_last.to_vec())?);
        let y0 = tape.leaf(Tensor::new(vec![1, 2], last_pos.to_vec())?);
        let out = decode(&mut tape, &b, h, y0, horizons)?;
        Ok(tape.value(out).clone())
    }

    /// Normalized `[K, 2]` prediction for a prepared sample.
    pub fn predict_normalized(&self, sample: &Sample) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let f = forward_graph(&mut tape, &b, &self.config, sample)?;
        Ok(tape.value(f.prediction).clone())
    }

    /// Forecast positions in degrees for horizons `1..=K`.
    pub fn forward(
        &self,
        window: &Window,
        prompt: Tensor,
        stats: &NormalizationStats,
    ) -> Result<Vec<(f64, f64)>> {
        let sample = Sample::new(window, prompt, stats);
        let pred = self.predict_normalized(&sample)?;
        Ok(to_degrees(&pred, &sample, stats))
    }
}
