//! Language-conditioned encoder-decoder over top-down maps.
//!
//! The map raster is downsampled by a small convolutional stack, then
//! passed through `layers` stride-2 convolutions F_l. Slices of the
//! dialog summary vector predict per-layer 1x1 kernels K_l; the
//! filtered maps G_l = K_l * F_l re-enter a deconvolution decoder
//! through skip connections, H_l = Deconv([H_{l+1}; G_l + F_l]). A 1x1
//! head produces one logit per grid cell and a softmax over the floor.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    bilstm_encode, conv2d, deconv2d, dynamic_conv1x1, AdError, LstmDirWeights, ParamRef,
    ParamSet, Tape, Tensor,
};
use crate::text::Vocabulary;
use crate::util::rng_for;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("autodiff: {0}")]
    Autodiff(#[from] AdError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Input degradations used by the ablation study. `Full` is the
/// trained model as-is; the other two blank one input modality while
/// keeping the same weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoDialog,
    NoVision,
}

impl Ablation {
    pub fn parse(name: &str) -> Result<Self, ModelError> {
        match name {
            "full" => Ok(Ablation::Full),
            "no_dialog" => Ok(Ablation::NoDialog),
            "no_vision" => Ok(Ablation::NoVision),
            other => Err(ModelError::Config(format!("unknown ablation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub lstm_hidden: usize,
    /// channel width of the map features F_l
    pub map_channels: usize,
    /// number of conditioned filter layers
    pub layers: usize,
    /// pixels per prediction cell; power of two, fixed by the vision stack
    pub downsample: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    /// add F_l back onto the filtered map G_l before decoding
    pub residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            lstm_hidden: 48,
            map_channels: 32,
            layers: 3,
            downsample: 8,
            head_hidden: 16,
            dropout: 0.5,
            residual: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.layers == 0 {
            return err("layers must be at least 1".into());
        }
        if 2 * self.lstm_hidden % self.layers != 0 {
            return err(format!(
                "the dialog vector (2 x lstm_hidden = {}) must split evenly across {} layers",
                2 * self.lstm_hidden,
                self.layers
            ));
        }
        if self.downsample < 2 || !self.downsample.is_power_of_two() {
            return err(format!("downsample must be a power of two >= 2, got {}", self.downsample));
        }
        if self.embed_dim == 0 || self.map_channels == 0 || self.head_hidden == 0 {
            return err("layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must lie in [0,1), got {}", self.dropout));
        }
        Ok(())
    }

    fn vision_blocks(&self) -> usize {
        self.downsample.trailing_zeros() as usize
    }
}

struct LstmParams {
    w_ih: ParamRef,
    w_hh: ParamRef,
    b: ParamRef,
}

pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    embed: ParamRef,
    lstm_fwd: LstmParams,
    lstm_bwd: LstmParams,
    vis: Vec<(ParamRef, ParamRef)>,
    enc: Vec<(ParamRef, ParamRef)>,
    kern: Vec<(ParamRef, ParamRef)>,
    dec: Vec<(ParamRef, ParamRef)>,
    head: [(ParamRef, ParamRef); 2],
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let mut rng = rng_for(seed, "model-init");
        let mut ps = ParamSet::new();
        let (e, h, c) = (config.embed_dim, config.lstm_hidden, config.map_channels);

        let embed = ps.register_init("embed", &[vocab.len(), e], e, &mut rng);
        let lstm = |ps: &mut ParamSet, rng: &mut ChaCha12Rng, dir: &str| LstmParams {
            w_ih: ps.register_init(&format!("lstm_{dir}_w_ih"), &[4 * h, e], e, rng),
            w_hh: ps.register_init(&format!("lstm_{dir}_w_hh"), &[4 * h, h], h, rng),
            b: ps.register_zeros(&format!("lstm_{dir}_b"), &[4 * h]),
        };
        let lstm_fwd = lstm(&mut ps, &mut rng, "fwd");
        let lstm_bwd = lstm(&mut ps, &mut rng, "bwd");

        let conv_pair = |ps: &mut ParamSet,
                         rng: &mut ChaCha12Rng,
                         name: &str,
                         cout: usize,
                         cin: usize,
                         k: usize| {
            // biases get a small random init too: an all-zero bias parks
            // relu pre-activations of dead regions exactly on the kink
            (
                ps.register_init(&format!("{name}_w"), &[cout, cin, k, k], cin * k * k, rng),
                ps.register_init(&format!("{name}_b"), &[cout], cin * k * k, rng),
            )
        };
        let vis: Vec<_> = (0..config.vision_blocks())
            .map(|i| {
                let cin = if i == 0 { 3 } else { c };
                conv_pair(&mut ps, &mut rng, &format!("vis{i}"), c, cin, 4)
            })
            .collect();
        let enc: Vec<_> = (0..config.layers)
            .map(|l| conv_pair(&mut ps, &mut rng, &format!("enc{l}"), c, c, 4))
            .collect();
        let slice = 2 * h / config.layers;
        let kern: Vec<_> = (0..config.layers)
            .map(|l| {
                (
                    ps.register_init(&format!("kern{l}_w"), &[c * c, slice], slice, &mut rng),
                    ps.register_zeros(&format!("kern{l}_b"), &[c * c]),
                )
            })
            .collect();
        // dec{l} consumes the decoder state at layer l; the deepest layer
        // sees only the filtered map, the rest a 2C-channel concat
        let dec: Vec<_> = (0..config.layers)
            .map(|l| {
                let cin = if l == config.layers - 1 { c } else { 2 * c };
                let w = ps.register_init(
                    &format!("dec{l}_w"),
                    &[cin, c, 4, 4],
                    cin * 16,
                    &mut rng,
                );
                let b = ps.register_init(&format!("dec{l}_b"), &[c], cin * 16, &mut rng);
                (w, b)
            })
            .collect();
        let head = [
            conv_pair(&mut ps, &mut rng, "head0", config.head_hidden, c, 1),
            conv_pair(&mut ps, &mut rng, "head1", 1, config.head_hidden, 1),
        ];
        Ok(Model {
            config,
            vocab,
            params: ps,
            embed,
            lstm_fwd,
            lstm_bwd,
            vis,
            enc,
            kern,
            dec,
            head,
        })
    }

    /// Encode the dialog token ids into the summary vector [2H].
    pub fn encode_dialog(
        &self,
        tape: &Tape,
        token_ids: &[u32],
        training: bool,
        rng: &mut ChaCha12Rng,
    ) -> Result<Tensor, ModelError> {
        let embed = tape.param(&self.embed);
        let ids: Vec<usize> = token_ids.iter().map(|&i| i as usize).collect();
        let x = Tensor::embedding_lookup(&embed, &ids);
        let fwd = LstmDirWeights {
            w_ih: &tape.param(&self.lstm_fwd.w_ih),
            w_hh: &tape.param(&self.lstm_fwd.w_hh),
            b: &tape.param(&self.lstm_fwd.b),
        };
        let bwd = LstmDirWeights {
            w_ih: &tape.param(&self.lstm_bwd.w_ih),
            w_hh: &tape.param(&self.lstm_bwd.w_hh),
            b: &tape.param(&self.lstm_bwd.b),
        };
        let (_, summary) = bilstm_encode(&x, &fwd, &bwd, self.config.lstm_hidden)?;
        Ok(summary.dropout(self.config.dropout, training, rng)?)
    }

    /// Normalize a raster into a [1,3,H,W] input tensor.
    pub fn map_tensor(tape: &Tape, raster: &[u8], height: usize, width: usize) -> Tensor {
        assert_eq!(raster.len(), height * width * 3, "raster length mismatch");
        // interleaved RGB rows -> channel planes
        let mut vals = vec![0.0; raster.len()];
        for row in 0..height {
            for col in 0..width {
                for ch in 0..3 {
                    vals[(ch * height + row) * width + col] =
                        raster[(row * width + col) * 3 + ch] as f64 / 255.0;
                }
            }
        }
        tape.constant(&[1, 3, height, width], vals)
    }

    /// Raw logits, one per prediction cell, row-major over the grid.
    pub fn forward(
        &self,
        tape: &Tape,
        map: &Tensor,
        token_ids: &[u32],
        ablation: Ablation,
        training: bool,
        rng: &mut ChaCha12Rng,
    ) -> Result<Tensor, ModelError> {
        let cfg = &self.config;
        let shape = map.shape().to_vec();
        if shape.len() != 4 || shape[0] != 1 || shape[1] != 3 {
            return Err(ModelError::Config(format!("map must be [1,3,H,W], got {shape:?}")));
        }
        let (h_px, w_px) = (shape[2], shape[3]);
        let (gh, gw) = (h_px / cfg.downsample, w_px / cfg.downsample);
        if gh * cfg.downsample != h_px
            || gw * cfg.downsample != w_px
            || gh % (1 << cfg.layers) != 0
            || gw % (1 << cfg.layers) != 0
        {
            return Err(ModelError::Config(format!(
                "map {h_px}x{w_px} does not divide into a {}x-downsampled grid \
                 halvable {} times",
                cfg.downsample, cfg.layers
            )));
        }

        let two_h = 2 * cfg.lstm_hidden;
        let summary = match ablation {
            Ablation::NoDialog => tape.constant(&[two_h], vec![0.0; two_h]),
            _ => self.encode_dialog(tape, token_ids, training, rng)?,
        };

        let c = cfg.map_channels;
        let mut feat = match ablation {
            Ablation::NoVision => tape.constant(&[1, c, gh, gw], vec![0.5; c * gh * gw]),
            _ => {
                let mut t = map.clone();
                for (w, b) in &self.vis {
                    t = conv2d(&t, &tape.param(w), &tape.param(b), 2, 1)?.relu();
                }
                t
            }
        };

        let mut maps = Vec::with_capacity(cfg.layers);
        for (w, b) in &self.enc {
            feat = conv2d(&feat, &tape.param(w), &tape.param(b), 2, 1)?.relu();
            maps.push(feat.clone());
        }

        let slice = two_h / cfg.layers;
        let mut mixes = Vec::with_capacity(cfg.layers);
        for (l, (w, b)) in self.kern.iter().enumerate() {
            let u = summary.narrow(0, l * slice, slice);
            let k = u.linear(&tape.param(w), Some(&tape.param(b))).reshape(&[1, c, c]);
            let g = dynamic_conv1x1(&maps[l], &k)?;
            mixes.push(if cfg.residual { g.add(&maps[l]) } else { g });
        }

        let last = cfg.layers - 1;
        let (w, b) = &self.dec[last];
        let mut dec = deconv2d(&mixes[last], &tape.param(w), &tape.param(b), 2, 1)?.relu();
        for l in (0..last).rev() {
            let cat = Tensor::concat(&[&dec, &mixes[l]], 1);
            let (w, b) = &self.dec[l];
            dec = deconv2d(&cat, &tape.param(w), &tape.param(b), 2, 1)?.relu();
        }

        let (w0, b0) = &self.head[0];
        let hid = conv2d(&dec, &tape.param(w0), &tape.param(b0), 1, 0)?
            .relu()
            .dropout(cfg.dropout, training, rng)?;
        let (w1, b1) = &self.head[1];
        let logits = conv2d(&hid, &tape.param(w1), &tape.param(b1), 1, 0)?;
        Ok(logits.reshape(&[gh * gw]))
    }

    /// Inference: probability grid over one floor's prediction cells.
    pub fn predict(
        &self,
        raster: &[u8],
        height: usize,
        width: usize,
        token_ids: &[u32],
        meters_per_pixel: f64,
        ablation: Ablation,
    ) -> Result<PredictionGrid, ModelError> {
        let tape = Tape::new();
        let map = Model::map_tensor(&tape, raster, height, width);
        let mut rng = rng_for(0, "predict");
        let logits = self.forward(&tape, &map, token_ids, ablation, false, &mut rng)?;
        let probs = logits.softmax_flat().values().to_vec();
        Ok(PredictionGrid {
            rows: height / self.config.downsample,
            cols: width / self.config.downsample,
            cell_size_m: self.config.downsample as f64 * meters_per_pixel,
            probs,
        })
    }

    /// Overwrite embedding rows from a text file of `token v_1 .. v_E`
    /// lines; tokens missing from the vocabulary are skipped.
    pub fn load_pretrained_embeddings(&mut self, path: &std::path::Path) -> Result<usize, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let e = self.config.embed_dim;
        let mut loaded = 0;
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tok = parts.next().unwrap();
            let vals: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| {
                        ModelError::Config(format!("embedding line {}: bad float", ln + 1))
                    })
                })
                .collect::<Result<_, _>>()?;
            if vals.len() != e {
                return Err(ModelError::Config(format!(
                    "embedding line {}: expected {e} values, got {}",
                    ln + 1,
                    vals.len()
                )));
            }
            let id = self.vocab.id(tok);
            if id == crate::text::UNK && tok != "<unk>" {
                continue;
            }
            let mut p = self.embed.borrow_mut();
            let row = id as usize * e;
            p.values[row..row + e].copy_from_slice(&vals);
            loaded += 1;
        }
        Ok(loaded)
    }
}

/// KL divergence of the softmaxed logits from a target distribution.
pub fn kl_loss(logits: &Tensor, target: &Tensor) -> Result<Tensor, ModelError> {
    Ok(Tensor::kl_div(target, &logits.log_softmax_flat())?)
}

/// Normalized probabilities over the prediction grid of one floor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionGrid {
    pub rows: usize,
    pub cols: usize,
    /// side length of one cell in meters
    pub cell_size_m: f64,
    /// row-major probabilities, `rows * cols` values
    pub probs: Vec<f64>,
}

impl PredictionGrid {
    /// Most probable cell; ties go to the lowest row-major index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Center of a cell in meters, (x, y).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.cell_size_m,
            (row as f64 + 0.5) * self.cell_size_m,
        )
    }

    /// Predicted position in meters.
    pub fn predicted_position(&self) -> (f64, f64) {
        let (r, c) = self.argmax();
        self.cell_center(r, c)
    }
}

/// Worst relative error between analytic parameter gradients and
/// central finite differences, sampling `per_param` coordinates of
/// every parameter. The loss is the KL training objective.
pub fn param_grad_check(
    model: &Model,
    raster: &[u8],
    height: usize,
    width: usize,
    token_ids: &[u32],
    target: &[f64],
    per_param: usize,
    h: f64,
) -> Result<f64, ModelError> {
    let loss_value = |model: &Model| -> Result<f64, ModelError> {
        let tape = Tape::new();
        let map = Model::map_tensor(&tape, raster, height, width);
        let mut rng = rng_for(0, "grad-check");
        let logits = model.forward(&tape, &map, token_ids, Ablation::Full, false, &mut rng)?;
        let t = tape.constant(&[target.len()], target.to_vec());
        Ok(kl_loss(&logits, &t)?.scalar())
    };

    // analytic gradients
    model.params.zero_grads();
    {
        let tape = Tape::new();
        let map = Model::map_tensor(&tape, raster, height, width);
        let mut rng = rng_for(0, "grad-check");
        let logits = model.forward(&tape, &map, token_ids, Ablation::Full, false, &mut rng)?;
        let t = tape.constant(&[target.len()], target.to_vec());
        let loss = kl_loss(&logits, &t)?;
        tape.backward(&loss)?;
    }

    let mut worst = 0.0f64;
    let refs: Vec<ParamRef> = model.params.iter().cloned().collect();
    for p in refs {
        let n = p.borrow().values.len();
        let step = (n / per_param).max(1);
        for i in (0..n).step_by(step) {
            let analytic = p.borrow().grad[i];
            let orig = p.borrow().values[i];
            p.borrow_mut().values[i] = orig + h;
            let up = loss_value(model)?;
            p.borrow_mut().values[i] = orig - h;
            let down = loss_value(model)?;
            p.borrow_mut().values[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
