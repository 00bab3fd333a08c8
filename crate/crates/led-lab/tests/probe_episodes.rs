//! Scratch probe: run real episodes through the minimal training harness
//! that is known to learn object queries on real maps.

use led_lab::autodiff::{AdamState, Tape, Tensor};
use led_lab::dataset::load_dataset;
use led_lab::model::{kl_loss, Ablation, Model, ModelConfig};
use led_lab::text::{dialog_tokens, encode_dialog, DialogVariant, Vocabulary};
use led_lab::train::gaussian_target;
use led_lab::util::rng_for;
use led_lab::worldgen::Split;
use rand::prelude::*;

#[test]
fn probe_episode_training() {
    let ds = load_dataset(std::path::Path::new("/tmp/bench11/data")).unwrap();
    let train_eps = ds.episodes_in(Split::Train);
    let unseen = ds.episodes_in(Split::ValUnseen);

    let tokens: Vec<String> =
        train_eps.iter().flat_map(|e| dialog_tokens(&e.dialog)).collect();
    let vocab = Vocabulary::build(tokens.iter().map(String::as_str));
    let cfg = ModelConfig {
        embed_dim: 24,
        lstm_hidden: 24,
        map_channels: 16,
        layers: 3,
        downsample: 4,
        head_hidden: 16,
        dropout: 0.0,
        residual: true,
    };
    let model = Model::new(cfg.clone(), vocab, 7).unwrap();
    let mut adam = AdamState::new(&model.params, 0.003);
    let mut rng = rng_for(7, "probe-episodes");
    let cell = cfg.downsample as f64 * 0.25;

    for step in 0..3000 {
        let tape = Tape::new();
        let mut losses = Vec::new();
        for _ in 0..8 {
            let ep = train_eps.choose(&mut rng).unwrap();
            let env = &ds.envs[&ep.env_id];
            let f = &env.floors[ep.final_floor()];
            let ids = encode_dialog(&ep.dialog, &model.vocab, DialogVariant::Full).ids;
            let map = Model::map_tensor(&tape, &f.raster, f.height, f.width);
            let logits = model
                .forward(&tape, &map, &ids, Ablation::Full, true, &mut rng)
                .unwrap();
            let (gh, gw) = (f.height / cfg.downsample, f.width / cfg.downsample);
            let pos = (ep.final_position.1, ep.final_position.2);
            let target =
                tape.constant(&[gh * gw], gaussian_target(gh, gw, cell, pos, 1.0));
            losses.push(kl_loss(&logits, &target).unwrap());
        }
        let refs: Vec<&Tensor> = losses.iter().collect();
        let total = Tensor::concat(&refs, 0).sum().scale(1.0 / 8.0);
        model.params.zero_grads();
        tape.backward(&total).unwrap();
        adam.step(&model.params);

        if step % 300 == 299 {
            let mut hits = 0;
            for ep in unseen.iter().take(100) {
                let env = &ds.envs[&ep.env_id];
                let f = &env.floors[ep.final_floor()];
                let ids =
                    encode_dialog(&ep.dialog, &model.vocab, DialogVariant::Full).ids;
                let g = model
                    .predict(&f.raster, f.height, f.width, &ids, 0.25, Ablation::Full)
                    .unwrap();
                let p = g.predicted_position();
                let d = ((p.0 - ep.final_position.1).powi(2)
                    + (p.1 - ep.final_position.2).powi(2))
                .sqrt();
                hits += (d <= 3.0) as usize;
            }
            println!("step {}: val acc3 {hits}/100", step + 1);
        }
    }
}
