//! LSSAE networks: the static encoder `E^c`, dynamic encoders `E^w`/`E^v`,
//! prior networks `F^w`/`F^v`, decoder `D` and classifier `C`.

use serde::{Deserialize, Serialize};

use super::{LatentDist, LatentVars, PriorType, RolloutMode, GROUP_DYNAMIC, GROUP_MAIN};
use crate::autodiff::{Activation, Graph, Var};
use crate::distributions::{CategoricalVars, DiagGaussian, GaussianVars};
use crate::error::{Error, Result};
use crate::nn::{Linear, LstmCell, Mlp, RecurrentState, StateVars};
use crate::params::ParamSet;
use crate::rng::{Rng, SeedTree};
use crate::tensor::Tensor;

/// Rows per graph when evaluating large inputs forward-only.
const EVAL_CHUNK: usize = 2048;

/// Architecture sizes. Everything needed to rebuild the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub data_dim: usize,
    pub classes: usize,
    pub d_c: usize,
    pub d_w: usize,
    pub k_v: usize,
    /// Width of the four-layer feature extractors of `E^c` and `E^w`.
    pub feature_width: usize,
    pub lstm_hidden: usize,
    /// Hidden widths of the decoder between latent and data space.
    pub decoder_widths: Vec<usize>,
    pub prior_type: PriorType,
}

impl ModelDims {
    /// Default sizes for a dataset with `data_dim` features and `classes` labels.
    pub fn new(data_dim: usize, classes: usize) -> Self {
        Self {
            data_dim,
            classes,
            d_c: 20,
            d_w: 20,
            k_v: classes,
            feature_width: 512,
            lstm_hidden: 64,
            decoder_widths: vec![16, 64, 128],
            prior_type: PriorType::Categorical,
        }
    }

    /// Width of `z^v` as seen by the classifier (0 without a `z^v` track).
    pub fn v_dim(&self) -> usize {
        if self.prior_type.has_v() {
            self.k_v
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("data_dim", self.data_dim),
            ("classes", self.classes),
            ("d_c", self.d_c),
            ("d_w", self.d_w),
            ("k_v", self.k_v),
            ("feature_width", self.feature_width),
            ("lstm_hidden", self.lstm_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if self.decoder_widths.contains(&0) {
            return Err(Error::Invalid("decoder widths must be positive".into()));
        }
        Ok(())
    }
}

/// One minibatch per source domain, all with the same row count. Row `i` of
/// every domain forms one pseudo-sequence through time.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedBatch {
    pub xs: Vec<Tensor>,
    pub ys: Vec<Vec<usize>>,
}

impl AlignedBatch {
    pub fn new(xs: Vec<Tensor>, ys: Vec<Vec<usize>>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Shape(format!(
                "aligned batch needs one label list per domain ({} x, {} y)",
                xs.len(),
                ys.len()
            )));
        }
        let [b, d] = xs[0].shape();
        for (t, (x, y)) in xs.iter().zip(&ys).enumerate() {
            if x.shape() != [b, d] || y.len() != b {
                return Err(Error::Shape(format!(
                    "domain {t} batch is {:?} with {} labels, expected [{b}, {d}]",
                    x.shape(),
                    y.len()
                )));
            }
        }
        Ok(Self { xs, ys })
    }

    pub fn steps(&self) -> usize {
        self.xs.len()
    }

    pub fn batch_size(&self) -> usize {
        self.xs[0].rows()
    }

    pub fn data_dim(&self) -> usize {
        self.xs[0].cols()
    }
}

/// Every latent, distribution and output of one training forward pass, as
/// graph nodes. Row-stacked tensors hold time stamp `t` in rows
/// `t·batch .. (t+1)·batch`.
#[derive(Debug, Clone)]
pub struct GraphLatents {
    pub steps: usize,
    pub batch: usize,
    pub x: Var,
    pub labels: Vec<usize>,
    pub q_c: GaussianVars,
    pub z_c: Var,
    pub q_w: Vec<GaussianVars>,
    pub p_w: Vec<GaussianVars>,
    pub z_w: Vec<Var>,
    pub q_v: Vec<LatentVars>,
    pub p_v: Vec<LatentVars>,
    pub z_v: Vec<Var>,
    pub x_hat: Var,
    pub logits: Var,
}

/// Value snapshot of a forward pass, split per time stamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentBundle {
    pub x: Vec<Tensor>,
    pub labels: Vec<Vec<usize>>,
    pub q_c: Vec<DiagGaussian>,
    pub z_c: Vec<Tensor>,
    pub q_w: Vec<DiagGaussian>,
    /// Single-row priors, shared by every sample at that time stamp.
    pub p_w: Vec<DiagGaussian>,
    pub z_w: Vec<Tensor>,
    pub q_v: Vec<LatentDist>,
    pub p_v: Vec<LatentDist>,
    pub z_v: Vec<Tensor>,
    pub x_hat: Vec<Tensor>,
    pub logits: Vec<Tensor>,
}

impl GraphLatents {
    pub fn bundle(&self, g: &Graph) -> LatentBundle {
        let b = self.batch;
        let split = |t: &Tensor| -> Vec<Tensor> {
            (0..self.steps)
                .map(|s| t.slice_rows(s * b, (s + 1) * b))
                .collect()
        };
        let q_c = self.q_c.value(g);
        LatentBundle {
            x: split(g.value(self.x)),
            labels: self.labels.chunks(b.max(1)).map(<[usize]>::to_vec).collect(),
            q_c: split(&q_c.mean)
                .into_iter()
                .zip(split(&q_c.log_var))
                .map(|(mean, log_var)| DiagGaussian { mean, log_var })
                .collect(),
            z_c: split(g.value(self.z_c)),
            q_w: self.q_w.iter().map(|d| d.value(g)).collect(),
            p_w: self.p_w.iter().map(|d| d.value(g)).collect(),
            z_w: self.z_w.iter().map(|&z| g.value(z).clone()).collect(),
            q_v: self.q_v.iter().map(|d| d.value(g)).collect(),
            p_v: self.p_v.iter().map(|d| d.value(g)).collect(),
            z_v: self.z_v.iter().map(|&z| g.value(z).clone()).collect(),
            x_hat: split(g.value(self.x_hat)),
            logits: split(g.value(self.logits)),
        }
    }
}

/// Distributions and fed-back latents of a prior rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub dists: Vec<LatentDist>,
    pub samples: Vec<Tensor>,
}

#[derive(Debug, Clone)]
struct GaussianHead {
    mean: Linear,
    log_var: Linear,
}

impl GaussianHead {
    fn new(p: &mut ParamSet, name: &str, dims: (usize, usize), group: usize, rng: &mut Rng) -> Self {
        Self {
            mean: Linear::new(p, &format!("{name}.mean"), dims.0, dims.1, group, rng),
            log_var: Linear::new(p, &format!("{name}.log_var"), dims.0, dims.1, group, rng),
        }
    }

    fn forward(&self, g: &mut Graph, p: &ParamSet, h: Var) -> Result<GaussianVars> {
        let mean = self.mean.forward(g, p, h)?;
        let log_var = self.log_var.forward(g, p, h)?;
        GaussianVars::new(g, mean, log_var)
    }
}

#[derive(Debug, Clone)]
enum VHead {
    Categorical(Linear),
    Gaussian(GaussianHead),
}

impl VHead {
    fn new(p: &mut ParamSet, name: &str, dims: (usize, usize), gaussian: bool, rng: &mut Rng) -> Self {
        if gaussian {
            VHead::Gaussian(GaussianHead::new(p, name, dims, GROUP_DYNAMIC, rng))
        } else {
            VHead::Categorical(Linear::new(p, &format!("{name}.logits"), dims.0, dims.1, GROUP_DYNAMIC, rng))
        }
    }

    fn forward(&self, g: &mut Graph, p: &ParamSet, h: Var) -> Result<LatentVars> {
        Ok(match self {
            VHead::Categorical(l) => LatentVars::Categorical(CategoricalVars {
                logits: l.forward(g, p, h)?,
            }),
            VHead::Gaussian(head) => LatentVars::Gaussian(head.forward(g, p, h)?),
        })
    }
}

#[derive(Debug, Clone)]
struct VTrack {
    encoder: LstmCell,
    encoder_head: VHead,
    prior: Option<(LstmCell, VHead)>,
}

/// The full LSSAE parameter set and network layout.
#[derive(Debug, Clone)]
pub struct LssaeModel {
    dims: ModelDims,
    params: ParamSet,
    enc_c: Mlp,
    head_c: GaussianHead,
    enc_w: Mlp,
    lstm_w: LstmCell,
    head_w: GaussianHead,
    prior_w: LstmCell,
    prior_head_w: GaussianHead,
    v: Option<VTrack>,
    decoder: Mlp,
    classifier: Linear,
}

/// Widths of the four-layer feature extractor.
pub(crate) fn extractor_widths(data_dim: usize, width: usize) -> Vec<usize> {
    vec![data_dim, width, width, width, width]
}

impl LssaeModel {
    pub fn new(dims: ModelDims, seed: SeedTree) -> Result<Self> {
        dims.validate()?;
        let mut rng = seed.child("init").rng();
        let rng = &mut rng;
        let mut p = ParamSet::new();
        let (fw, h) = (dims.feature_width, dims.lstm_hidden);
        let extractor = extractor_widths(dims.data_dim, fw);

        let enc_c = Mlp::new(&mut p, "enc_c", &extractor, Activation::Relu, Activation::Identity, GROUP_MAIN, rng);
        let head_c = GaussianHead::new(&mut p, "enc_c.head", (fw, dims.d_c), GROUP_MAIN, rng);

        let enc_w = Mlp::new(&mut p, "enc_w", &extractor, Activation::Relu, Activation::Identity, GROUP_DYNAMIC, rng);
        let lstm_w = LstmCell::new(&mut p, "enc_w.lstm", fw, h, GROUP_DYNAMIC, rng);
        let head_w = GaussianHead::new(&mut p, "enc_w.head", (h, dims.d_w), GROUP_DYNAMIC, rng);

        let prior_w = LstmCell::new(&mut p, "prior_w.lstm", dims.d_w, h, GROUP_DYNAMIC, rng);
        let prior_head_w = GaussianHead::new(&mut p, "prior_w.head", (h, dims.d_w), GROUP_DYNAMIC, rng);

        let v = if dims.prior_type.has_v() {
            let gaussian = dims.prior_type == PriorType::Gaussian;
            let encoder = LstmCell::new(&mut p, "enc_v.lstm", dims.classes, h, GROUP_DYNAMIC, rng);
            let encoder_head = VHead::new(&mut p, "enc_v.head", (h, dims.k_v), gaussian, rng);
            let prior = if dims.prior_type.has_prior_net() {
                let cell = LstmCell::new(&mut p, "prior_v.lstm", dims.k_v, h, GROUP_DYNAMIC, rng);
                let head = VHead::new(&mut p, "prior_v.head", (h, dims.k_v), gaussian, rng);
                Some((cell, head))
            } else {
                None
            };
            Some(VTrack {
                encoder,
                encoder_head,
                prior,
            })
        } else {
            None
        };

        let mut dec_widths = vec![dims.d_c + dims.d_w];
        dec_widths.extend(&dims.decoder_widths);
        dec_widths.push(dims.data_dim);
        let decoder = Mlp::new(&mut p, "decoder", &dec_widths, Activation::LeakyRelu(0.2), Activation::Identity, GROUP_MAIN, rng);
        let classifier = Linear::new(&mut p, "classifier", dims.d_c + dims.v_dim(), dims.classes, GROUP_MAIN, rng);

        Ok(Self {
            dims,
            params: p,
            enc_c,
            head_c,
            enc_w,
            lstm_w,
            head_w,
            prior_w,
            prior_head_w,
            v,
            decoder,
            classifier,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_width(&self, what: &str, t: &Tensor, width: usize) -> Result<()> {
        if t.cols() != width {
            return Err(Error::Shape(format!(
                "{what} has width {}, model expects {width}",
                t.cols()
            )));
        }
        Ok(())
    }

    // ---- graph-level building blocks ----

    /// `q(z^c | x)` for every row of `x`.
    pub fn static_posterior_in(&self, g: &mut Graph, x: Var) -> Result<GaussianVars> {
        let h = self.enc_c.forward(g, &self.params, x)?;
        self.head_c.forward(g, &self.params, h)
    }

    /// Feature-extractor output of `E^w`, before the recurrent cell.
    pub fn dynamic_features_in(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.enc_w.forward(g, &self.params, x)
    }

    /// One recurrent step of `E^w` on extracted features.
    pub fn dynamic_w_step_in(&self, g: &mut Graph, features: Var, state: StateVars) -> Result<(GaussianVars, StateVars)> {
        let s = self.lstm_w.step(g, &self.params, features, state)?;
        Ok((self.head_w.forward(g, &self.params, s.hidden)?, s))
    }

    /// One recurrent step of `E^v` on one-hot labels.
    pub fn dynamic_v_step_in(&self, g: &mut Graph, onehot: Var, state: StateVars) -> Result<(LatentVars, StateVars)> {
        let v = self.v_track()?;
        let s = v.encoder.step(g, &self.params, onehot, state)?;
        Ok((v.encoder_head.forward(g, &self.params, s.hidden)?, s))
    }

    fn v_track(&self) -> Result<&VTrack> {
        self.v
            .as_ref()
            .ok_or_else(|| Error::Invalid("model has no z^v track (prior_type = none)".into()))
    }

    /// Rolls `F^w` forward `steps` times from `z_0 = 0`, feeding back drawn latents.
    pub fn rollout_w_in(
        &self,
        g: &mut Graph,
        steps: usize,
        mode: RolloutMode,
        rng: &mut Rng,
    ) -> Result<(Vec<GaussianVars>, Vec<Var>)> {
        let mut z = g.constant(Tensor::zeros(1, self.dims.d_w));
        let mut state = StateVars::zeros(g, 1, self.dims.lstm_hidden);
        let (mut dists, mut samples) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
        for _ in 0..steps {
            state = self.prior_w.step(g, &self.params, z, state)?;
            let d = self.prior_head_w.forward(g, &self.params, state.hidden)?;
            z = LatentVars::Gaussian(d).draw(g, mode, 1.0, rng)?;
            dists.push(d);
            samples.push(z);
        }
        Ok((dists, samples))
    }

    /// Rolls the `z^v` prior forward. The uniform variant yields the fixed
    /// uniform categorical at every step.
    pub fn rollout_v_in(
        &self,
        g: &mut Graph,
        steps: usize,
        mode: RolloutMode,
        temperature: f64,
        rng: &mut Rng,
    ) -> Result<(Vec<LatentVars>, Vec<Var>)> {
        let v = self.v_track()?;
        let k = self.dims.k_v;
        let (mut dists, mut samples) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
        match &v.prior {
            None => {
                for _ in 0..steps {
                    let d = LatentVars::Categorical(CategoricalVars::uniform(g, 1, k));
                    samples.push(d.draw(g, mode, temperature, rng)?);
                    dists.push(d);
                }
            }
            Some((cell, head)) => {
                let mut z = g.constant(Tensor::zeros(1, k));
                let mut state = StateVars::zeros(g, 1, self.dims.lstm_hidden);
                for _ in 0..steps {
                    state = cell.step(g, &self.params, z, state)?;
                    let d = head.forward(g, &self.params, state.hidden)?;
                    z = d.draw(g, mode, temperature, rng)?;
                    dists.push(d);
                    samples.push(z);
                }
            }
        }
        Ok((dists, samples))
    }

    pub fn decode_in(&self, g: &mut Graph, z_c: Var, z_w: Var) -> Result<Var> {
        let z = g.concat_cols(&[z_c, z_w])?;
        self.decoder.forward(g, &self.params, z)
    }

    /// Class logits from `[z^c, z^v]`; `z_v` is ignored without a `z^v` track.
    pub fn classify_in(&self, g: &mut Graph, z_c: Var, z_v: Option<Var>) -> Result<Var> {
        let input = match (self.dims.prior_type.has_v(), z_v) {
            (true, Some(v)) => g.concat_cols(&[z_c, v])?,
            (true, None) => return Err(Error::Invalid("classifier needs z^v".into())),
            (false, _) => z_c,
        };
        self.classifier.forward(g, &self.params, input)
    }

    /// The full training forward pass on an aligned batch.
    pub fn forward(
        &self,
        g: &mut Graph,
        batch: &AlignedBatch,
        temperature: f64,
        rng: &mut Rng,
    ) -> Result<GraphLatents> {
        let (steps, b) = (batch.steps(), batch.batch_size());
        if batch.data_dim() != self.dims.data_dim {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                batch.data_dim(),
                self.dims.data_dim
            )));
        }
        let stacked = Tensor::concat_rows(&batch.xs.iter().collect::<Vec<_>>())?;
        let labels: Vec<usize> = batch.ys.concat();
        let x = g.constant(stacked);

        let q_c = self.static_posterior_in(g, x)?;
        let z_c = LatentVars::Gaussian(q_c).draw(g, RolloutMode::Sample, 1.0, rng)?;

        let feats = self.dynamic_features_in(g, x)?;
        let mut state = StateVars::zeros(g, b, self.dims.lstm_hidden);
        let (mut q_w, mut z_w) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
        for t in 0..steps {
            let f = g.slice_rows(feats, t * b, (t + 1) * b)?;
            let (q, s) = self.dynamic_w_step_in(g, f, state)?;
            state = s;
            z_w.push(LatentVars::Gaussian(q).draw(g, RolloutMode::Sample, 1.0, rng)?);
            q_w.push(q);
        }
        let (p_w, _) = self.rollout_w_in(g, steps, RolloutMode::Sample, rng)?;

        let (mut q_v, mut z_v, mut p_v) = (Vec::new(), Vec::new(), Vec::new());
        if self.v.is_some() {
            let mut state = StateVars::zeros(g, b, self.dims.lstm_hidden);
            for y in &batch.ys {
                let onehot = g.constant(Tensor::one_hot(y, self.dims.classes)?);
                let (q, s) = self.dynamic_v_step_in(g, onehot, state)?;
                state = s;
                z_v.push(q.draw(g, RolloutMode::Sample, temperature, rng)?);
                q_v.push(q);
            }
            p_v = self.rollout_v_in(g, steps, RolloutMode::Sample, temperature, rng)?.0;
        }

        let z_w_all = g.concat_rows(&z_w)?;
        let x_hat = self.decode_in(g, z_c, z_w_all)?;
        let z_v_all = if z_v.is_empty() {
            None
        } else {
            Some(g.concat_rows(&z_v)?)
        };
        let logits = self.classify_in(g, z_c, z_v_all)?;

        Ok(GraphLatents {
            steps,
            batch: b,
            x,
            labels,
            q_c,
            z_c,
            q_w,
            p_w,
            z_w,
            q_v,
            p_v,
            z_v,
            x_hat,
            logits,
        })
    }

    // ---- value-level operations ----

    /// `q(z^c | x)` per row.
    pub fn encode_static(&self, x: &Tensor) -> Result<DiagGaussian> {
        self.check_width("input", x, self.dims.data_dim)?;
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let q = self.static_posterior_in(&mut g, xv)?;
        Ok(q.value(&g))
    }

    /// Posterior means of `z^c`, evaluated in chunks to bound memory.
    pub fn static_means(&self, x: &Tensor) -> Result<Tensor> {
        self.check_width("input", x, self.dims.data_dim)?;
        let mut parts = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + EVAL_CHUNK).min(x.rows());
            let mut g = Graph::new();
            let xv = g.constant(x.slice_rows(start, end));
            let q = self.static_posterior_in(&mut g, xv)?;
            parts.push(g.value(q.mean).clone());
            start = end;
            if start >= x.rows() {
                break;
            }
        }
        Tensor::concat_rows(&parts.iter().collect::<Vec<_>>())
    }

    /// One step of `E^w`: posterior `q(z_t^w | ·)` and the advanced state.
    pub fn encode_dynamic_w(&self, x_t: &Tensor, state: &RecurrentState) -> Result<(DiagGaussian, RecurrentState)> {
        self.check_width("input", x_t, self.dims.data_dim)?;
        let mut g = Graph::new();
        let x = g.constant(x_t.clone());
        let f = self.dynamic_features_in(&mut g, x)?;
        let s = StateVars::from_state(&mut g, state);
        let (q, s) = self.dynamic_w_step_in(&mut g, f, s)?;
        Ok((q.value(&g), s.value(&g)))
    }

    /// One step of `E^v` on one-hot label rows.
    pub fn encode_dynamic_v(&self, y_onehot: &Tensor, state: &RecurrentState) -> Result<(LatentDist, RecurrentState)> {
        self.check_width("label one-hot", y_onehot, self.dims.classes)?;
        for r in 0..y_onehot.rows() {
            let row = y_onehot.row(r);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::Invalid(format!("label row {r} is not one-hot: {row:?}")));
            }
        }
        let mut g = Graph::new();
        let y = g.constant(y_onehot.clone());
        let s = StateVars::from_state(&mut g, state);
        let (q, s) = self.dynamic_v_step_in(&mut g, y, s)?;
        Ok((q.value(&g), s.value(&g)))
    }

    /// `p(z_1^w), p(z_2^w | z_1^w), …` with the drawn latents.
    pub fn prior_rollout_w(&self, steps: usize, mode: RolloutMode, rng: &mut Rng) -> Result<Rollout> {
        let mut g = Graph::new();
        let (d, z) = self.rollout_w_in(&mut g, steps, mode, rng)?;
        Ok(Rollout {
            dists: d.iter().map(|d| LatentDist::Gaussian(d.value(&g))).collect(),
            samples: z.iter().map(|&z| g.value(z).clone()).collect(),
        })
    }

    /// `p(z_1^v), p(z_2^v | z_1^v), …` with the drawn latents.
    pub fn prior_rollout_v(&self, steps: usize, mode: RolloutMode, temperature: f64, rng: &mut Rng) -> Result<Rollout> {
        let mut g = Graph::new();
        let (d, z) = self.rollout_v_in(&mut g, steps, mode, temperature, rng)?;
        Ok(Rollout {
            dists: d.iter().map(|d| d.value(&g)).collect(),
            samples: z.iter().map(|&z| g.value(z).clone()).collect(),
        })
    }

    /// Reconstruction mean for each row of `[z_c, z_w]`.
    pub fn decode(&self, z_c: &Tensor, z_w: &Tensor) -> Result<Tensor> {
        self.check_width("z_c", z_c, self.dims.d_c)?;
        self.check_width("z_w", z_w, self.dims.d_w)?;
        let mut g = Graph::new();
        let c = g.constant(z_c.clone());
        let w = g.constant(z_w.clone());
        let out = self.decode_in(&mut g, c, w)?;
        Ok(g.value(out).clone())
    }

    /// Class logits for each row of `z_c`. `z_v` has one row (shared) or one
    /// per `z_c` row; it is ignored without a `z^v` track.
    pub fn classify(&self, z_c: &Tensor, z_v: &Tensor) -> Result<Tensor> {
        self.check_width("z_c", z_c, self.dims.d_c)?;
        let mut g = Graph::new();
        let c = g.constant(z_c.clone());
        let v = if self.dims.prior_type.has_v() {
            self.check_width("z_v", z_v, self.dims.k_v)?;
            if self.dims.prior_type.is_categorical() {
                for r in 0..z_v.rows() {
                    let row = z_v.row(r);
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::Invalid(format!("z_v row {r} is not on the simplex")));
                    }
                }
            }
            let v = g.constant(z_v.clone());
            Some(if z_v.rows() == 1 && z_c.rows() != 1 {
                g.broadcast_rows(v, z_c.rows())?
            } else {
                v
            })
        } else {
            None
        };
        let out = self.classify_in(&mut g, c, v)?;
        Ok(g.value(out).clone())
    }

    /// Reconstructs an aligned sequence through posterior means of `z^c` and `z^w`.
    pub fn reconstruct_aligned(&self, xs: &[Tensor]) -> Result<Vec<Tensor>> {
        let ys = xs.iter().map(|x| vec![0; x.rows()]).collect();
        let batch = AlignedBatch::new(xs.to_vec(), ys)?;
        let b = batch.batch_size();
        let mut g = Graph::new();
        let stacked = Tensor::concat_rows(&batch.xs.iter().collect::<Vec<_>>())?;
        let x = g.constant(stacked);
        let q_c = self.static_posterior_in(&mut g, x)?;
        let feats = self.dynamic_features_in(&mut g, x)?;
        let mut state = StateVars::zeros(&mut g, b, self.dims.lstm_hidden);
        let mut out = Vec::with_capacity(batch.steps());
        for t in 0..batch.steps() {
            let f = g.slice_rows(feats, t * b, (t + 1) * b)?;
            let (q, s) = self.dynamic_w_step_in(&mut g, f, state)?;
            state = s;
            let zc = g.slice_rows(q_c.mean, t * b, (t + 1) * b)?;
            let xh = self.decode_in(&mut g, zc, q.mean)?;
            out.push(g.value(xh).clone());
        }
        Ok(out)
    }
}
