//! Dual-stream central-difference network. Two parallel encoders share an
//! input; after every stage a fusion block lets each stream borrow from the
//! other. All per-stage maps are upsampled to the input grid and decoded
//! into the three output planes.

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::tape::{NodeId, Tape};

const BASE_CHANNELS: [usize; 4] = [16, 16, 32, 64];

fn default_theta() -> f64 {
    0.7
}
fn default_width() -> f64 {
    0.25
}
fn default_input() -> (usize, usize) {
    (64, 64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_width")]
    pub width_multiplier: f64,
    /// (height, width); both sides must be multiples of 8 so three pooling
    /// stages divide evenly.
    #[serde(default = "default_input")]
    pub input_size: (usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            theta: default_theta(),
            width_multiplier: default_width(),
            input_size: default_input(),
        }
    }
}

impl ModelConfig {
    pub fn check(&self) -> Result<()> {
        if !self.theta.is_finite() || !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid(format!("theta {} outside [0, 1]", self.theta)));
        }
        if !self.width_multiplier.is_finite() || self.width_multiplier <= 0.0 {
            return Err(Error::invalid(format!(
                "width multiplier {} must be positive",
                self.width_multiplier
            )));
        }
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
            return Err(Error::invalid(format!(
                "input size {h}x{w} must be a positive multiple of 8"
            )));
        }
        Ok(())
    }

    /// Stage widths after applying the multiplier; every stage keeps at
    /// least one channel.
    pub fn channels(&self) -> [usize; 4] {
        let mut out = [0usize; 4];
        for (slot, base) in out.iter_mut().zip(BASE_CHANNELS) {
            *slot = ((base as f64 * self.width_multiplier).round() as usize).max(1);
        }
        out
    }
}

fn default_alpha() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the squared-error term.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Weight of the directional-contrast term.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }
}

impl LossConfig {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("loss weight {name} = {v} must be >= 0")));
            }
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::invalid("both loss weights are zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    params: Vec<(String, Array4<f64>)>,
}

/// Handles produced by one forward construction: the prediction node plus
/// the tape ids of every parameter, in canonical order.
pub struct ForwardPass {
    pub pred: NodeId,
    pub param_ids: Vec<NodeId>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

fn he_init(rng: &mut ChaCha8Rng, dim: (usize, usize, usize, usize)) -> Array4<f64> {
    let fan_in = (dim.1 * dim.2 * dim.3) as f64;
    let std = (2.0 / fan_in).sqrt();
    let len = dim.0 * dim.1 * dim.2 * dim.3;
    let data: Vec<f64> = (0..len).map(|_| normal(rng) * std).collect();
    Array4::from_shape_vec(dim, data).expect("length computed from dim")
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.check()?;
        let [c0, c1, c2, c3] = config.channels();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<(String, Array4<f64>)> = Vec::new();
        let conv = |params: &mut Vec<(String, Array4<f64>)>,
                        rng: &mut ChaCha8Rng,
                        name: &str,
                        cout: usize,
                        cin: usize,
                        k: usize| {
            params.push((format!("{name}.w"), he_init(rng, (cout, cin, k, k))));
            params.push((format!("{name}.b"), Array4::zeros((1, cout, 1, 1))));
        };

        for s in ["a", "b"] {
            conv(&mut params, &mut rng, &format!("stream_{s}.stem"), c0, 3, 3);
        }
        let stage_io = [(c0, c1), (c1, c2), (c2, c3)];
        for (k, &(cin, cout)) in stage_io.iter().enumerate() {
            let k = k + 1;
            for s in ["a", "b"] {
                conv(
                    &mut params,
                    &mut rng,
                    &format!("stream_{s}.stage{k}"),
                    cout,
                    cin,
                    3,
                );
            }
            for s in ["a", "b"] {
                conv(&mut params, &mut rng, &format!("cfim{k}.{s}"), cout, 2 * cout, 1);
            }
        }
        let cat = 2 * (c1 + c2 + c3);
        conv(&mut params, &mut rng, "head.mix", c2, cat, 1);
        conv(&mut params, &mut rng, "head.out", 3, c2, 3);

        Ok(Model { config, params })
    }

    pub fn params(&self) -> &[(String, Array4<f64>)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Vec<(String, Array4<f64>)> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, a)| a.len()).sum()
    }

    /// Build the whole forward graph on `tape`. `trainable` marks parameter
    /// leaves as gradient targets.
    pub fn forward(
        &self,
        tape: &mut Tape,
        images: &Array4<f64>,
        trainable: bool,
    ) -> Result<ForwardPass> {
        let img = tape.leaf(images.clone(), false);
        self.forward_from(tape, img, trainable)
    }

    /// Same as `forward` but reads the image from a leaf already on the
    /// tape, so callers may mark the input itself as a gradient target.
    pub fn forward_from(
        &self,
        tape: &mut Tape,
        img: NodeId,
        trainable: bool,
    ) -> Result<ForwardPass> {
        let (_, c, h, w) = tape.value(img).dim();
        if c != 3 {
            return Err(Error::invalid(format!("expected 3 input channels, got {c}")));
        }
        if (h, w) != self.config.input_size {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_size,
                got: (h, w),
            });
        }
        let theta = self.config.theta;
        let param_ids: Vec<NodeId> = self
            .params
            .iter()
            .map(|(_, v)| tape.leaf(v.clone(), trainable))
            .collect();
        let p = |name: &str| -> NodeId {
            let idx = self
                .params
                .iter()
                .position(|(n, _)| n == name)
                .unwrap_or_else(|| panic!("unknown parameter {name}"));
            param_ids[idx]
        };
        let block = |tape: &mut Tape, x: NodeId, name: &str, th: f64| -> Result<NodeId> {
            let y = tape.cdc_conv(x, p(&format!("{name}.w")), th)?;
            let y = tape.add_bias(y, p(&format!("{name}.b")));
            Ok(tape.silu(y))
        };

        let mut a = block(tape, img, "stream_a.stem", theta)?;
        let mut b = block(tape, img, "stream_b.stem", theta)?;
        let mut feats: Vec<(NodeId, usize)> = Vec::new();
        for k in 1..=3usize {
            a = block(tape, a, &format!("stream_a.stage{k}"), theta)?;
            a = tape.avg_pool2(a)?;
            b = block(tape, b, &format!("stream_b.stage{k}"), theta)?;
            b = tape.avg_pool2(b)?;
            let joint = tape.concat_c(&[a, b]);
            let da = tape.cdc_conv(joint, p(&format!("cfim{k}.a.w")), 0.0)?;
            let da = tape.add_bias(da, p(&format!("cfim{k}.a.b")));
            let db = tape.cdc_conv(joint, p(&format!("cfim{k}.b.w")), 0.0)?;
            let db = tape.add_bias(db, p(&format!("cfim{k}.b.b")));
            a = tape.add(a, da);
            b = tape.add(b, db);
            feats.push((a, 1 << k));
            feats.push((b, 1 << k));
        }

        let ups: Vec<NodeId> = feats
            .iter()
            .map(|&(id, f)| tape.upsample_nearest(id, f))
            .collect();
        let cat = tape.concat_c(&ups);
        let mix = tape.cdc_conv(cat, p("head.mix.w"), 0.0)?;
        let mix = tape.add_bias(mix, p("head.mix.b"));
        let mix = tape.silu(mix);
        let out = tape.cdc_conv(mix, p("head.out.w"), theta)?;
        let out = tape.add_bias(out, p("head.out.b"));
        let pred = tape.sigmoid_node(out);
        Ok(ForwardPass { pred, param_ids })
    }

    /// Inference: predicted three-plane stack, each value in (0, 1).
    pub fn predict(&self, images: &Array4<f64>) -> Result<Array4<f64>> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, images, false)?;
        Ok(tape.value(pass.pred).clone())
    }
}

/// Mean squared error over all elements.
pub fn mse_loss(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let m = a.len() as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / m
}

/// Directional-contrast loss; see `tape::cd_forward` for the border rule.
pub fn contrastive_depth_loss(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    crate::network::tape::cd_forward(a, b)
}

pub fn total_loss(pred: &Array4<f64>, label: &Array4<f64>, cfg: &LossConfig) -> f64 {
    cfg.alpha * mse_loss(pred, label) + cfg.beta * contrastive_depth_loss(pred, label)
}

/// One training-style evaluation: loss value plus gradients for every
/// parameter in canonical order.
pub fn loss_and_grads(
    model: &Model,
    images: &Array4<f64>,
    labels: &Array4<f64>,
    cfg: &LossConfig,
) -> Result<(f64, Vec<Array4<f64>>)> {
    cfg.check()?;
    let mut tape = Tape::new();
    let pass = model.forward(&mut tape, images, true)?;
    if tape.value(pass.pred).dim() != labels.dim() {
        return Err(Error::invalid(format!(
            "label stack {:?} does not match prediction {:?}",
            labels.dim(),
            tape.value(pass.pred).dim()
        )));
    }
    let lab = tape.leaf(labels.clone(), false);
    let m = tape.mse(pass.pred, lab);
    let c = tape.contrastive_depth(pass.pred, lab);
    let loss = tape.weighted_sum(&[(m, cfg.alpha), (c, cfg.beta)]);
    tape.backward(loss);
    let grads = pass
        .param_ids
        .iter()
        .zip(model.params())
        .map(|(&id, (_, v))| match tape.grad(id) {
            Some(g) => g.clone(),
            None => Array4::zeros(v.dim()),
        })
        .collect();
    Ok((tape.scalar(loss), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            theta: 0.7,
            width_multiplier: 1.0 / 16.0,
            input_size: (8, 8),
        }
    }

    fn random_images(seed: u64, n: usize, h: usize, w: usize) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * 3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        Array4::from_shape_vec((n, 3, h, w), data).unwrap()
    }

    fn random_labels(seed: u64, n: usize, h: usize, w: usize) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * 3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        Array4::from_shape_vec((n, 3, h, w), data).unwrap()
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = ModelConfig::default();
        cfg.theta = 1.5;
        assert!(cfg.check().is_err());
        cfg.theta = 0.7;
        cfg.input_size = (60, 64);
        assert!(cfg.check().is_err());
        cfg.input_size = (64, 64);
        cfg.width_multiplier = 0.0;
        assert!(cfg.check().is_err());
    }

    #[test]
    fn channel_widths_scale_and_stay_positive() {
        let mut cfg = ModelConfig::default();
        assert_eq!(cfg.channels(), [4, 4, 8, 16]);
        cfg.width_multiplier = 1.0;
        assert_eq!(cfg.channels(), [16, 16, 32, 64]);
        cfg.width_multiplier = 0.01;
        assert_eq!(cfg.channels(), [1, 1, 1, 1]);
    }

    #[test]
    fn output_shape_and_range() {
        let model = Model::new(ModelConfig::default(), 7).unwrap();
        let images = random_images(1, 2, 64, 64);
        let pred = model.predict(&images).unwrap();
        assert_eq!(pred.dim(), (2, 3, 64, 64));
        for &v in pred.iter() {
            assert!((0.0..=1.0).contains(&v), "output {v} escaped [0, 1]");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let model = Model::new(ModelConfig::default(), 3).unwrap();
        let images = random_images(2, 1, 64, 64);
        let p1 = model.predict(&images).unwrap();
        let p2 = model.predict(&images).unwrap();
        assert_eq!(p1, p2);
        let again = Model::new(ModelConfig::default(), 3).unwrap();
        let p3 = again.predict(&images).unwrap();
        assert_eq!(p1, p3);
    }

    #[test]
    fn rejects_wrong_input_size() {
        let model = Model::new(ModelConfig::default(), 0).unwrap();
        let images = random_images(4, 1, 32, 32);
        assert!(model.predict(&images).is_err());
    }

    #[test]
    fn param_count_monotone_in_width() {
        let counts: Vec<usize> = [0.25, 0.5, 1.0]
            .iter()
            .map(|&m| {
                let cfg = ModelConfig {
                    width_multiplier: m,
                    ..ModelConfig::default()
                };
                Model::new(cfg, 0).unwrap().param_count()
            })
            .collect();
        assert!(counts[0] < counts[1] && counts[1] < counts[2], "{counts:?}");
    }

    #[test]
    fn total_loss_is_weighted_composition() {
        let a = random_images(5, 1, 8, 8);
        let b = random_labels(55, 1, 8, 8);
        let cfg = LossConfig { alpha: 0.8, beta: 0.3 };
        let total = total_loss(&a, &b, &cfg);
        let expect = 0.8 * mse_loss(&a, &b) + 0.3 * contrastive_depth_loss(&a, &b);
        assert_abs_diff_eq!(total, expect, epsilon = 1e-12);
    }

    #[test]
    fn gradcheck_full_model_parameters() {
        let model = Model::new(tiny_config(), 11).unwrap();
        let images = random_images(6, 1, 8, 8);
        let labels = random_labels(13, 1, 8, 8);
        let cfg = LossConfig::default();

        let (_, grads) = loss_and_grads(&model, &images, &labels, &cfg).unwrap();

        let eval = |m: &Model| -> f64 {
            let pred = m.predict(&images).unwrap();
            total_loss(&pred, &labels, &cfg)
        };
        let eps = 1e-5;
        let mut checked = 0usize;
        for pi in 0..model.params().len() {
            let dim = model.params()[pi].1.dim();
            let len = model.params()[pi].1.len();
            // Probe a spread of coordinates in every tensor rather than all
            // of them; keeps the test fast while covering each layer.
            let stride = (len / 6).max(1);
            for flat in (0..len).step_by(stride) {
                let idx = [
                    flat / (dim.3 * dim.2 * dim.1),
                    (flat / (dim.3 * dim.2)) % dim.1,
                    (flat / dim.3) % dim.2,
                    flat % dim.3,
                ];
                let mut up = Model::new(tiny_config(), 11).unwrap();
                up.params_mut()[pi].1[idx] += eps;
                let mut down = Model::new(tiny_config(), 11).unwrap();
                down.params_mut()[pi].1[idx] -= eps;
                let numeric = (eval(&up) - eval(&down)) / (2.0 * eps);
                let analytic = grads[pi][idx];
                let denom = numeric.abs().max(1e-3);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "param {} [{idx:?}]: analytic {analytic} vs numeric {numeric}",
                    model.params()[pi].0,
                );
                checked += 1;
            }
        }
        assert!(checked > 50, "probe count {checked}");
    }

    #[test]
    fn gradcheck_full_model_input() {
        let model = Model::new(tiny_config(), 17).unwrap();
        let images = random_images(8, 1, 8, 8);
        let labels = random_labels(19, 1, 8, 8);
        let cfg = LossConfig::default();

        let mut tape = Tape::new();
        let img = tape.leaf(images.clone(), true);
        let pass = model.forward_from(&mut tape, img, false).unwrap();
        let lab = tape.leaf(labels.clone(), false);
        let m = tape.mse(pass.pred, lab);
        let c = tape.contrastive_depth(pass.pred, lab);
        let loss = tape.weighted_sum(&[(m, cfg.alpha), (c, cfg.beta)]);
        tape.backward(loss);
        let analytic = tape.grad(img).unwrap().clone();

        let eval = |img: &Array4<f64>| -> f64 {
            let pred = model.predict(img).unwrap();
            total_loss(&pred, &labels, &cfg)
        };
        let eps = 1e-5;
        let mut probe = images.clone();
        let idxs: Vec<_> = images.indexed_iter().map(|(i, _)| i).collect();
        for idx in idxs.into_iter().step_by(7) {
            let orig = probe[idx];
            probe[idx] = orig + eps;
            let up = eval(&probe);
            probe[idx] = orig - eps;
            let down = eval(&probe);
            probe[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let got = analytic[idx];
            let denom = numeric.abs().max(1e-3);
            assert!(
                (got - numeric).abs() / denom < 1e-4,
                "input [{idx:?}]: analytic {got} vs numeric {numeric}"
            );
        }
    }
}
