use rand::Rng;

use super::{DecoderKind, ModelConfig, ModelError};
use crate::nn::{
    log_softmax, sigmoid, softmax_rows, softmax_rows_backward, softplus, AffineLayer, BatchNorm,
    BatchNormCache, DropoutMask, Mode, Tensor2,
};
use crate::prior::LogisticNormalParams;
use crate::rng;

/// Softplus trunk followed by two linear heads, each optionally batch
/// normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderNet {
    pub trunk: Vec<AffineLayer>,
    pub mu: AffineLayer,
    pub logvar: AffineLayer,
    pub mu_bn: Option<BatchNorm>,
    pub logvar_bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// Unnormalized topic-word weights, `K × V`.
    pub beta: Tensor2,
    /// Over the `V` word logits. For the LDA decoder the batch is the set of
    /// topics; for ProdLDA it is the set of documents.
    pub bn: Option<BatchNorm>,
}

/// Same layout as the model, holding gradients instead of parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub encoder: EncoderNet,
    pub decoder: Decoder,
}

impl Gradients {
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        param_blocks(&self.encoder, &self.decoder)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    /// Global L2 norm over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(_, b)| b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, b) in param_blocks_mut(&mut self.encoder, &mut self.decoder) {
            b.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

/// Standard-normal reparameterization noise and, optionally, a dropout keep
/// mask over θ (row-major, `rows × K`).
#[derive(Debug, Clone)]
pub struct Noise {
    pub eps: Tensor2,
    pub keep: Option<Vec<bool>>,
}

impl Noise {
    pub fn zero(rows: usize, topics: usize) -> Self {
        Self {
            eps: Tensor2::zeros(rows, topics),
            keep: None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rows: usize, topics: usize, dropout: f64, rng: &mut R) -> Self {
        let eps = Tensor2::standard_normal(rows, topics, rng);
        let keep = (dropout > 0.0).then(|| DropoutMask::sample(rows * topics, dropout, rng).keep);
        Self { eps, keep }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    /// Multiplies the loss and all gradients; `1/B` gives a batch mean.
    pub scale: f64,
    /// Weight on the KL term (1 is the true bound).
    pub kl_weight: f64,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            scale: 1.0,
            kl_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboOutput {
    /// `recon − KL` per document.
    pub per_doc: Vec<f64>,
    pub recon: Vec<f64>,
    pub kl: Vec<f64>,
    pub total: f64,
}

impl ElboOutput {
    fn new(recon: Vec<f64>, kl: Vec<f64>) -> Self {
        let per_doc: Vec<f64> = recon.iter().zip(&kl).map(|(r, k)| r - k).collect();
        let total = per_doc.iter().sum();
        Self {
            per_doc,
            recon,
            kl,
            total,
        }
    }
}

/// Batch statistics from a train-mode pass, to be folded into the running
/// statistics once the step is accepted.
#[derive(Debug, Clone, Default)]
pub struct RunningUpdate {
    mu: Option<BatchNormCache>,
    logvar: Option<BatchNormCache>,
    decoder: Option<BatchNormCache>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub elbo: ElboOutput,
    pub grads: Gradients,
    pub running: RunningUpdate,
}

#[derive(Debug, Clone)]
pub struct TopicModel {
    config: ModelConfig,
    encoder: EncoderNet,
    decoder: Decoder,
    prior: LogisticNormalParams,
}

struct EncoderPass {
    inputs: Vec<Tensor2>,
    pre: Vec<Tensor2>,
    hidden: Tensor2,
    mu_cache: Option<BatchNormCache>,
    logvar_cache: Option<BatchNormCache>,
    mu: Tensor2,
    logvar: Tensor2,
}

struct DecoderPass {
    cache: Option<BatchNormCache>,
    /// Row-softmaxed topics (LDA only).
    phi: Option<Tensor2>,
    probs: Tensor2,
    log_probs: Tensor2,
}

struct DecoderGrads {
    dtheta: Tensor2,
    dbeta: Tensor2,
    dgain: Vec<f64>,
    dshift: Vec<f64>,
}

fn check(t: &Tensor2, term: &'static str) -> Result<(), ModelError> {
    match t.row_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        Some(doc) => Err(ModelError::NonFinite { term, doc }),
        None => Ok(()),
    }
}

fn check_vec(v: &[f64], term: &'static str) -> Result<(), ModelError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(doc) => Err(ModelError::NonFinite { term, doc }),
        None => Ok(()),
    }
}

fn bn_forward(
    bn: &Option<BatchNorm>,
    x: Tensor2,
    mode: Mode,
) -> Result<(Tensor2, Option<BatchNormCache>), ModelError> {
    match bn {
        Some(bn) => {
            let (y, cache) = bn.forward(&x, mode)?;
            Ok((y, Some(cache)))
        }
        None => Ok((x, None)),
    }
}

/// Returns `(dx, dgain, dshift)`; the parameter gradients are empty when
/// there is no layer.
fn bn_backward(
    bn: &Option<BatchNorm>,
    cache: &Option<BatchNormCache>,
    dy: Tensor2,
) -> Result<(Tensor2, Vec<f64>, Vec<f64>), ModelError> {
    match (bn, cache) {
        (Some(bn), Some(cache)) => {
            let g = bn.backward(cache, &dy)?;
            Ok((g.dx, g.dgain, g.dshift))
        }
        _ => Ok((dy, Vec::new(), Vec::new())),
    }
}

fn with_grads(bn: &Option<BatchNorm>, dgain: Vec<f64>, dshift: Vec<f64>) -> Option<BatchNorm> {
    bn.as_ref().map(|bn| BatchNorm {
        gain: dgain,
        shift: dshift,
        ..bn.clone()
    })
}

/// `θ = softmax(μ + exp(½ logvar) ⊙ ε)`, restricted to the kept entries when
/// a dropout mask is given. Masking before the softmax is the same as
/// dropping entries of θ and renormalizing. A row with every entry dropped
/// is left unmasked.
pub fn sample_theta(
    mu: &Tensor2,
    logvar: &Tensor2,
    eps: &Tensor2,
    keep: Option<&[bool]>,
) -> Tensor2 {
    let (rows, k) = mu.shape();
    let mut theta = Tensor2::zeros(rows, k);
    for r in 0..rows {
        let row_keep = keep.map(|m| &m[r * k..(r + 1) * k]).filter(|m| m.iter().any(|&b| b));
        let kept = |j: usize| row_keep.is_none_or(|m| m[j]);
        let out = theta.row_mut(r);
        let (m, lv, e) = (mu.row(r), logvar.row(r), eps.row(r));
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            out[j] = m[j] + (0.5 * lv[j]).exp() * e[j];
            if kept(j) {
                max = max.max(out[j]);
            }
        }
        let mut sum = 0.0;
        for (j, v) in out.iter_mut().enumerate() {
            *v = if kept(j) { (*v - max).exp() } else { 0.0 };
            sum += *v;
        }
        out.iter_mut().for_each(|v| *v /= sum);
    }
    theta
}

fn param_blocks<'a>(enc: &'a EncoderNet, dec: &'a Decoder) -> Vec<(String, &'a [f64])> {
    let mut out: Vec<(String, &[f64])> = Vec::new();
    for (i, l) in enc.trunk.iter().enumerate() {
        out.push((format!("enc.trunk.{i}.weight"), l.weight.as_slice()));
        out.push((format!("enc.trunk.{i}.bias"), &l.bias));
    }
    for (name, layer, bn) in [
        ("mu", &enc.mu, &enc.mu_bn),
        ("logvar", &enc.logvar, &enc.logvar_bn),
    ] {
        out.push((format!("enc.{name}.weight"), layer.weight.as_slice()));
        out.push((format!("enc.{name}.bias"), &layer.bias));
        if let Some(bn) = bn {
            out.push((format!("enc.{name}.bn.gain"), &bn.gain));
            out.push((format!("enc.{name}.bn.shift"), &bn.shift));
        }
    }
    out.push(("dec.beta".into(), dec.beta.as_slice()));
    if let Some(bn) = &dec.bn {
        out.push(("dec.bn.gain".into(), &bn.gain));
        out.push(("dec.bn.shift".into(), &bn.shift));
    }
    out
}

fn param_blocks_mut<'a>(
    enc: &'a mut EncoderNet,
    dec: &'a mut Decoder,
) -> Vec<(String, &'a mut [f64])> {
    let mut out: Vec<(String, &mut [f64])> = Vec::new();
    for (i, l) in enc.trunk.iter_mut().enumerate() {
        out.push((format!("enc.trunk.{i}.weight"), l.weight.as_mut_slice()));
        out.push((format!("enc.trunk.{i}.bias"), &mut l.bias));
    }
    for (name, layer, bn) in [
        ("mu", &mut enc.mu, &mut enc.mu_bn),
        ("logvar", &mut enc.logvar, &mut enc.logvar_bn),
    ] {
        out.push((format!("enc.{name}.weight"), layer.weight.as_mut_slice()));
        out.push((format!("enc.{name}.bias"), &mut layer.bias));
        if let Some(bn) = bn {
            out.push((format!("enc.{name}.bn.gain"), &mut bn.gain));
            out.push((format!("enc.{name}.bn.shift"), &mut bn.shift));
        }
    }
    out.push(("dec.beta".into(), dec.beta.as_mut_slice()));
    if let Some(bn) = &mut dec.bn {
        out.push(("dec.bn.gain".into(), &mut bn.gain));
        out.push(("dec.bn.shift".into(), &mut bn.shift));
    }
    out
}

impl TopicModel {
    /// Glorot-initialized weights drawn from the `model.init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut r = rng::stream(seed, "model.init");
        let (k, v) = (config.topics, config.vocab_size);
        let mut trunk = Vec::with_capacity(config.hidden.len());
        let mut width = v;
        for &h in &config.hidden {
            trunk.push(AffineLayer::xavier(width, h, &mut r));
            width = h;
        }
        let bn = |features: usize| {
            config
                .batch_norm
                .then(|| BatchNorm::with_settings(features, config.bn_momentum, config.bn_eps))
        };
        let encoder = EncoderNet {
            trunk,
            mu: AffineLayer::xavier(width, k, &mut r),
            logvar: AffineLayer::xavier(width, k, &mut r),
            mu_bn: bn(k),
            logvar_bn: bn(k),
        };
        let decoder = Decoder {
            beta: AffineLayer::xavier(v, k, &mut r).weight,
            bn: bn(v),
        };
        let prior = config.prior.params(k)?;
        Ok(Self {
            config,
            encoder,
            decoder,
            prior,
        })
    }

    /// Reassembles a model from its parts, checking shapes against `config`.
    pub fn from_parts(
        config: ModelConfig,
        encoder: EncoderNet,
        decoder: Decoder,
    ) -> Result<Self, ModelError> {
        let template = Self::new(config.clone(), 0)?;
        let shapes = |e: &EncoderNet, d: &Decoder| -> Vec<(String, usize)> {
            param_blocks(e, d)
                .into_iter()
                .map(|(n, b)| (n, b.len()))
                .collect()
        };
        if shapes(&encoder, &decoder) != shapes(&template.encoder, &template.decoder) {
            return Err(ModelError::Format(
                "parameter layout does not match the configuration".into(),
            ));
        }
        let mut model = template;
        model.encoder = encoder;
        model.decoder = decoder;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &EncoderNet {
        &self.encoder
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut Decoder {
        &mut self.decoder
    }

    pub fn prior(&self) -> &LogisticNormalParams {
        &self.prior
    }

    pub fn topics(&self) -> usize {
        self.config.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn decoder_kind(&self) -> DecoderKind {
        self.config.decoder
    }

    /// Trainable parameter blocks in their fixed declaration order.
    pub fn params(&self) -> Vec<(String, &[f64])> {
        param_blocks(&self.encoder, &self.decoder)
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        param_blocks_mut(&mut self.encoder, &mut self.decoder)
    }

    /// Batch-norm running statistics, which are state but not parameters.
    pub fn running_stats(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (name, bn) in [
            ("enc.mu.bn", &self.encoder.mu_bn),
            ("enc.logvar.bn", &self.encoder.logvar_bn),
            ("dec.bn", &self.decoder.bn),
        ] {
            if let Some(bn) = bn {
                out.push((format!("{name}.running_mean"), &bn.running_mean));
                out.push((format!("{name}.running_var"), &bn.running_var));
            }
        }
        out
    }

    pub fn running_stats_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (name, bn) in [
            ("enc.mu.bn", &mut self.encoder.mu_bn),
            ("enc.logvar.bn", &mut self.encoder.logvar_bn),
            ("dec.bn", &mut self.decoder.bn),
        ] {
            if let Some(bn) = bn {
                out.push((format!("{name}.running_mean"), &mut bn.running_mean));
                out.push((format!("{name}.running_var"), &mut bn.running_var));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        self.params().into_iter().flat_map(|(_, b)| b.to_vec()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.param_count() {
            return Err(ModelError::Config(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for (_, block) in self.params_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn apply_running(&mut self, update: &RunningUpdate) {
        let pairs = [
            (&mut self.encoder.mu_bn, &update.mu),
            (&mut self.encoder.logvar_bn, &update.logvar),
            (&mut self.decoder.bn, &update.decoder),
        ];
        for (bn, cache) in pairs {
            if let (Some(bn), Some(cache)) = (bn, cache) {
                bn.update_running(cache);
            }
        }
    }

    fn check_input(&self, x: &Tensor2) -> Result<(), ModelError> {
        if x.cols() != self.vocab_size() {
            return Err(crate::nn::NnError::ShapeMismatch {
                op: "model_input",
                expected: (x.rows(), self.vocab_size()),
                found: x.shape(),
            }
            .into());
        }
        Ok(())
    }

    fn encode_pass(&self, x: &Tensor2, mode: Mode) -> Result<EncoderPass, ModelError> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.encoder.trunk.len());
        let mut pre = Vec::with_capacity(self.encoder.trunk.len());
        let mut h = x.clone();
        for layer in &self.encoder.trunk {
            let a = layer.forward(&h)?;
            let next = a.map(softplus);
            inputs.push(h);
            pre.push(a);
            h = next;
        }
        let (mu, mu_cache) = bn_forward(&self.encoder.mu_bn, self.encoder.mu.forward(&h)?, mode)?;
        let (logvar, logvar_cache) =
            bn_forward(&self.encoder.logvar_bn, self.encoder.logvar.forward(&h)?, mode)?;
        check(&mu, "encoder mean")?;
        check(&logvar, "encoder log-variance")?;
        Ok(EncoderPass {
            inputs,
            pre,
            hidden: h,
            mu_cache,
            logvar_cache,
            mu,
            logvar,
        })
    }

    fn decode_pass(&self, theta: &Tensor2, mode: Mode) -> Result<DecoderPass, ModelError> {
        match self.config.decoder {
            DecoderKind::ProdLda => {
                let logits = theta.matmul(&self.decoder.beta)?;
                let (logits, cache) = bn_forward(&self.decoder.bn, logits, mode)?;
                let mut log_probs = Tensor2::zeros(logits.rows(), logits.cols());
                for r in 0..logits.rows() {
                    log_probs.row_mut(r).copy_from_slice(&log_softmax(logits.row(r)));
                }
                Ok(DecoderPass {
                    cache,
                    phi: None,
                    probs: log_probs.map(f64::exp),
                    log_probs,
                })
            }
            DecoderKind::Lda => {
                let (logits, cache) = bn_forward(&self.decoder.bn, self.decoder.beta.clone(), mode)?;
                let phi = softmax_rows(&logits);
                let probs = theta.matmul(&phi)?;
                Ok(DecoderPass {
                    cache,
                    log_probs: probs.map(f64::ln),
                    phi: Some(phi),
                    probs,
                })
            }
        }
    }

    /// Gradients of `scale · Σ_d −recon_d` through the decoder.
    fn decoder_backward(
        &self,
        pass: &DecoderPass,
        x: &Tensor2,
        theta: &Tensor2,
        scale: f64,
    ) -> Result<DecoderGrads, ModelError> {
        let (b, v) = x.shape();
        match self.config.decoder {
            DecoderKind::ProdLda => {
                let mut dlogits = Tensor2::zeros(b, v);
                for d in 0..b {
                    let n = x.row(d);
                    let len: f64 = n.iter().sum();
                    for ((g, &nw), &p) in dlogits.row_mut(d).iter_mut().zip(n).zip(pass.probs.row(d)) {
                        *g = scale * (len * p - nw);
                    }
                }
                let (da, dgain, dshift) = bn_backward(&self.decoder.bn, &pass.cache, dlogits)?;
                Ok(DecoderGrads {
                    dtheta: da.matmul_t(&self.decoder.beta)?,
                    dbeta: theta.t_matmul(&da)?,
                    dgain,
                    dshift,
                })
            }
            DecoderKind::Lda => {
                let phi = pass.phi.as_ref().expect("LDA pass keeps phi");
                let mut dp = Tensor2::zeros(b, v);
                for d in 0..b {
                    for ((g, &nw), &p) in dp.row_mut(d).iter_mut().zip(x.row(d)).zip(pass.probs.row(d)) {
                        if nw != 0.0 {
                            *g = -scale * nw / p;
                        }
                    }
                }
                let dphi = theta.t_matmul(&dp)?;
                let dlogits = softmax_rows_backward(phi, &dphi);
                let (dbeta, dgain, dshift) = bn_backward(&self.decoder.bn, &pass.cache, dlogits)?;
                Ok(DecoderGrads {
                    dtheta: dp.matmul_t(phi)?,
                    dbeta,
                    dgain,
                    dshift,
                })
            }
        }
    }

    fn reconstruction(pass: &DecoderPass, x: &Tensor2) -> Result<Vec<f64>, ModelError> {
        let recon: Vec<f64> = (0..x.rows())
            .map(|d| {
                x.row(d)
                    .iter()
                    .zip(pass.log_probs.row(d))
                    .filter(|(&n, _)| n != 0.0)
                    .map(|(&n, &lp)| n * lp)
                    .sum()
            })
            .collect();
        check_vec(&recon, "reconstruction log-likelihood")?;
        Ok(recon)
    }

    /// Per-document `KL(N(μ, e^logvar) ‖ prior)`.
    pub fn kl(&self, mu: &Tensor2, logvar: &Tensor2) -> Vec<f64> {
        let (m1, v1) = (self.prior.mu(), self.prior.diag_var());
        (0..mu.rows())
            .map(|d| {
                0.5 * mu
                    .row(d)
                    .iter()
                    .zip(logvar.row(d))
                    .enumerate()
                    .map(|(k, (&m, &lv))| {
                        let diff = m1[k] - m;
                        lv.exp() / v1[k] + diff * diff / v1[k] - 1.0 + v1[k].ln() - lv
                    })
                    .sum::<f64>()
            })
            .collect()
    }

    /// Variational mean and log-variance for each row of `x` (raw counts).
    pub fn encode(&self, x: &Tensor2, mode: Mode) -> Result<(Tensor2, Tensor2), ModelError> {
        let pass = self.encode_pass(x, mode)?;
        Ok((pass.mu, pass.logvar))
    }

    /// Word distributions for each row of `theta`.
    pub fn decode(&self, theta: &Tensor2, mode: Mode) -> Result<Tensor2, ModelError> {
        Ok(self.decode_pass(theta, mode)?.probs)
    }

    /// Single-sample ELBO using the given noise; no dropout.
    pub fn elbo(&self, x: &Tensor2, eps: &Tensor2, mode: Mode) -> Result<ElboOutput, ModelError> {
        let enc = self.encode_pass(x, mode)?;
        self.latent_elbo(x, &enc.mu, &enc.logvar, eps, mode)
    }

    /// ELBO for explicitly supplied variational parameters.
    pub fn latent_elbo(
        &self,
        x: &Tensor2,
        mu: &Tensor2,
        logvar: &Tensor2,
        eps: &Tensor2,
        mode: Mode,
    ) -> Result<ElboOutput, ModelError> {
        let theta = sample_theta(mu, logvar, eps, None);
        check(&theta, "topic proportions")?;
        let dec = self.decode_pass(&theta, mode)?;
        let recon = Self::reconstruction(&dec, x)?;
        let kl = self.kl(mu, logvar);
        check_vec(&kl, "KL divergence")?;
        Ok(ElboOutput::new(recon, kl))
    }

    /// ELBO averaged over `samples` noise draws from `rng`.
    pub fn elbo_mc<R: Rng + ?Sized>(
        &self,
        x: &Tensor2,
        samples: usize,
        rng: &mut R,
        mode: Mode,
    ) -> Result<ElboOutput, ModelError> {
        let samples = samples.max(1);
        let enc = self.encode_pass(x, mode)?;
        let (rows, k) = enc.mu.shape();
        let mut recon = vec![0.0; rows];
        let mut kl = Vec::new();
        for _ in 0..samples {
            let eps = Tensor2::standard_normal(rows, k, rng);
            let out = self.latent_elbo(x, &enc.mu, &enc.logvar, &eps, mode)?;
            recon.iter_mut().zip(&out.recon).for_each(|(a, b)| *a += b / samples as f64);
            kl = out.kl;
        }
        Ok(ElboOutput::new(recon, kl))
    }

    /// Loss `scale · Σ_d (kl_weight · KL_d − recon_d)` and its gradient with
    /// respect to every parameter block.
    pub fn loss_and_grad(
        &self,
        x: &Tensor2,
        noise: &Noise,
        opts: LossOptions,
    ) -> Result<LossOutput, ModelError> {
        let mode = Mode::Train;
        let enc = self.encode_pass(x, mode)?;
        let theta = sample_theta(&enc.mu, &enc.logvar, &noise.eps, noise.keep.as_deref());
        check(&theta, "topic proportions")?;
        let dec = self.decode_pass(&theta, mode)?;
        let recon = Self::reconstruction(&dec, x)?;
        let kl = self.kl(&enc.mu, &enc.logvar);
        check_vec(&kl, "KL divergence")?;
        let elbo = ElboOutput::new(recon, kl);
        let loss = opts.scale
            * elbo
                .recon
                .iter()
                .zip(&elbo.kl)
                .map(|(r, k)| opts.kl_weight * k - r)
                .sum::<f64>();

        let dg = self.decoder_backward(&dec, x, &theta, opts.scale)?;
        let dz = softmax_rows_backward(&theta, &dg.dtheta);
        let (dmu, dlogvar) = self.latent_grads(&enc.mu, &enc.logvar, &noise.eps, &dz, opts);

        let (dmu_pre, mu_gain, mu_shift) = bn_backward(&self.encoder.mu_bn, &enc.mu_cache, dmu)?;
        let (dlv_pre, lv_gain, lv_shift) =
            bn_backward(&self.encoder.logvar_bn, &enc.logvar_cache, dlogvar)?;
        let gmu = self.encoder.mu.backward(&enc.hidden, &dmu_pre)?;
        let glv = self.encoder.logvar.backward(&enc.hidden, &dlv_pre)?;
        let mut dh = gmu.dx;
        dh.add_assign(&glv.dx)?;

        let mut trunk_grads = Vec::with_capacity(self.encoder.trunk.len());
        for (i, layer) in self.encoder.trunk.iter().enumerate().rev() {
            let pre = &enc.pre[i];
            let mut da = dh;
            for (g, &a) in da.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *g *= sigmoid(a);
            }
            let (dw, db) = layer.param_grads(&enc.inputs[i], &da)?;
            dh = if i > 0 { layer.input_grad(&da)? } else { Tensor2::zeros(0, 0) };
            trunk_grads.push(AffineLayer {
                weight: dw,
                bias: db,
            });
        }
        trunk_grads.reverse();

        let grads = Gradients {
            encoder: EncoderNet {
                trunk: trunk_grads,
                mu: AffineLayer {
                    weight: gmu.dweight,
                    bias: gmu.dbias,
                },
                logvar: AffineLayer {
                    weight: glv.dweight,
                    bias: glv.dbias,
                },
                mu_bn: with_grads(&self.encoder.mu_bn, mu_gain, mu_shift),
                logvar_bn: with_grads(&self.encoder.logvar_bn, lv_gain, lv_shift),
            },
            decoder: Decoder {
                beta: dg.dbeta,
                bn: with_grads(&self.decoder.bn, dg.dgain, dg.dshift),
            },
        };
        Ok(LossOutput {
            loss,
            elbo,
            grads,
            running: RunningUpdate {
                mu: enc.mu_cache,
                logvar: enc.logvar_cache,
                decoder: dec.cache,
            },
        })
    }

    /// Chain rule from `dL/dz` (with `z = μ + σ ⊙ ε`) plus the KL term.
    fn latent_grads(
        &self,
        mu: &Tensor2,
        logvar: &Tensor2,
        eps: &Tensor2,
        dz: &Tensor2,
        opts: LossOptions,
    ) -> (Tensor2, Tensor2) {
        let (m1, v1) = (self.prior.mu(), self.prior.diag_var());
        let c = opts.scale * opts.kl_weight;
        let (rows, k) = mu.shape();
        let mut dmu = dz.clone();
        let mut dlv = Tensor2::zeros(rows, k);
        for d in 0..rows {
            for j in 0..k {
                let (m, lv, e) = (mu[(d, j)], logvar[(d, j)], eps[(d, j)]);
                dmu.row_mut(d)[j] += c * (m - m1[j]) / v1[j];
                dlv.row_mut(d)[j] =
                    dz[(d, j)] * e * 0.5 * (0.5 * lv).exp() + c * 0.5 * (lv.exp() / v1[j] - 1.0);
            }
        }
        (dmu, dlv)
    }

    /// Negative ELBO and its gradient with respect to the variational
    /// parameters themselves, with every network weight held fixed.
    pub fn latent_loss_and_grad(
        &self,
        x: &Tensor2,
        mu: &Tensor2,
        logvar: &Tensor2,
        eps: &Tensor2,
        mode: Mode,
    ) -> Result<(ElboOutput, Tensor2, Tensor2), ModelError> {
        let theta = sample_theta(mu, logvar, eps, None);
        check(&theta, "topic proportions")?;
        let dec = self.decode_pass(&theta, mode)?;
        let recon = Self::reconstruction(&dec, x)?;
        let kl = self.kl(mu, logvar);
        check_vec(&kl, "KL divergence")?;
        let opts = LossOptions::default();
        let dg = self.decoder_backward(&dec, x, &theta, opts.scale)?;
        let dz = softmax_rows_backward(&theta, &dg.dtheta);
        let (dmu, dlv) = self.latent_grads(mu, logvar, eps, &dz, opts);
        Ok((ElboOutput::new(recon, kl), dmu, dlv))
    }

    /// `softmax(μ₀(x))` in inference mode: no noise, no dropout, running
    /// batch-norm statistics.
    pub fn infer_theta(&self, x: &Tensor2) -> Result<Tensor2, ModelError> {
        let (mu, _) = self.encode(x, Mode::Infer)?;
        Ok(softmax_rows(&mu))
    }

    /// The word distribution each topic induces on its own: the decoder
    /// applied to one-hot θ in inference mode. `K × V`.
    pub fn effective_topics(&self) -> Result<Tensor2, ModelError> {
        self.decode(&Tensor2::identity(self.topics()), Mode::Infer)
    }
}
