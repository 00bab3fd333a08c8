//! Scratch probe: can the model learn color->location grounding at all?

use led_lab::autodiff::{AdamState, Tape, Tensor};
use led_lab::model::{kl_loss, Ablation, Model, ModelConfig};
use led_lab::text::Vocabulary;
use led_lab::train::gaussian_target;
use led_lab::util::rng_for;
use rand::Rng;

const W: usize = 32;
const COLORS: [[u8; 3]; 4] =
    [[200, 40, 40], [40, 80, 200], [60, 170, 60], [220, 180, 40]];
const NAMES: [&str; 4] = ["red", "blue", "green", "yellow"];

fn make_sample(rng: &mut impl Rng) -> (Vec<u8>, usize, (f64, f64)) {
    // grey background, two 4x4 colored squares of distinct colors
    let mut raster = vec![128u8; W * W * 3];
    let mut put = |r: usize, c: usize, rgb: [u8; 3]| {
        for dr in 0..4 {
            for dc in 0..4 {
                let i = ((r + dr) * W + c + dc) * 3;
                raster[i..i + 3].copy_from_slice(&rgb);
            }
        }
    };
    let ca = rng.gen_range(0..4usize);
    let mut cb = rng.gen_range(0..4usize);
    while cb == ca {
        cb = rng.gen_range(0..4usize);
    }
    let pa = (rng.gen_range(0..W - 4), rng.gen_range(0..W - 4));
    let mut pb = (rng.gen_range(0..W - 4), rng.gen_range(0..W - 4));
    while pa.0.abs_diff(pb.0) < 6 && pa.1.abs_diff(pb.1) < 6 {
        pb = (rng.gen_range(0..W - 4), rng.gen_range(0..W - 4));
    }
    put(pa.0, pa.1, COLORS[ca]);
    put(pb.0, pb.1, COLORS[cb]);
    // ask for square a; position in meters at 0.25 m/px, center of square
    let ask = ca;
    let pos = ((pa.1 as f64 + 2.0) * 0.25, (pa.0 as f64 + 2.0) * 0.25);
    let _ = cb;
    (raster, ask, pos)
}

#[test]
fn probe_color_grounding() {
    let cfg = ModelConfig {
        embed_dim: 8,
        lstm_hidden: 9,
        map_channels: 16,
        layers: 3,
        downsample: 4,
        head_hidden: 8,
        dropout: 0.0,
        residual: true,
    };
    let vocab = Vocabulary::build(NAMES.iter().copied());
    let model = Model::new(cfg.clone(), vocab, 5).unwrap();
    let mut adam = AdamState::new(&model.params, 0.003);
    let mut rng = rng_for(5, "probe");
    let grid = W / cfg.downsample;
    let cell = cfg.downsample as f64 * 0.25;

    for step in 0..1500 {
        let tape = Tape::new();
        let mut losses = Vec::new();
        let batch = 8;
        for _ in 0..batch {
            let (raster, ask, pos) = make_sample(&mut rng);
            let ids = vec![model.vocab.id(NAMES[ask])];
            let map = Model::map_tensor(&tape, &raster, W, W);
            let logits = model
                .forward(&tape, &map, &ids, Ablation::Full, true, &mut rng)
                .unwrap();
            let target = tape.constant(
                &[grid * grid],
                gaussian_target(grid, grid, cell, pos, 1.0),
            );
            losses.push(kl_loss(&logits, &target).unwrap());
        }
        let refs: Vec<&Tensor> = losses.iter().collect();
        let total = Tensor::concat(&refs, 0).sum().scale(1.0 / batch as f64);
        model.params.zero_grads();
        tape.backward(&total).unwrap();
        adam.step(&model.params);

        if step % 250 == 249 {
            // held-out accuracy: does argmax fall within 1 cell of the square?
            let mut eval_rng = rng_for(99, "probe-eval");
            let mut hits = 0;
            for _ in 0..100 {
                let (raster, ask, pos) = make_sample(&mut eval_rng);
                let ids = vec![model.vocab.id(NAMES[ask])];
                let g = model.predict(&raster, W, W, &ids, 0.25, Ablation::Full).unwrap();
                let p = g.predicted_position();
                if (p.0 - pos.0).abs() <= cell && (p.1 - pos.1).abs() <= cell {
                    hits += 1;
                }
            }
            println!("step {}: held-out within-1-cell {}/100", step + 1, hits);
        }
    }
}
