//! Scratch probe: real worldgen rasters, synthetic "find the <color> <type>"
//! queries targeted at object glyphs.

use led_lab::autodiff::{AdamState, Tape, Tensor};
use led_lab::dataset::load_dataset;
use led_lab::model::{kl_loss, Ablation, Model, ModelConfig};
use led_lab::text::Vocabulary;
use led_lab::train::gaussian_target;
use led_lab::util::rng_for;
use led_lab::worldgen::catalog::Catalog;
use led_lab::worldgen::Environment;
use rand::prelude::*;

fn sample_query(
    env: &Environment,
    rng: &mut impl Rng,
) -> Option<(Vec<u8>, usize, usize, Vec<String>, (f64, f64))> {
    // pick an object whose (color, type) pair is unique on the floor
    let cat = Catalog::global();
    let f = &env.floors[0];
    let mut objs: Vec<_> = f.objects.iter().collect();
    objs.shuffle(rng);
    for o in &objs {
        let dup = f
            .objects
            .iter()
            .filter(|p| p.color == o.color && p.object_type == o.object_type)
            .count();
        if dup != 1 {
            continue;
        }
        let words = vec![
            cat.color_name(o.color).to_string(),
            cat.type_name(o.object_type).to_string(),
        ];
        let pos = ((o.cell.1 as f64 + 0.5) * 0.25, (o.cell.0 as f64 + 0.5) * 0.25);
        return Some((f.raster.clone(), f.height, f.width, words, pos));
    }
    None
}

#[test]
fn probe_object_queries_on_real_maps() {
    let ds = load_dataset(std::path::Path::new("/tmp/bench10/data")).unwrap();
    let envs: Vec<&Environment> = ds.envs.values().collect();
    let (train_envs, eval_envs) = envs.split_at(envs.len() - 25);

    let cat = Catalog::global();
    let mut words: Vec<String> = Vec::new();
    for i in 0..cat.types.len() {
        words.push(cat.type_name(i as u8).to_string());
    }
    for i in 0..cat.colors.len() {
        words.push(cat.color_name(i as u8).to_string());
    }
    let vocab = Vocabulary::build(words.iter().map(String::as_str));
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
    let mut rng = rng_for(7, "probe-realmap");
    let cell = cfg.downsample as f64 * 0.25;

    for step in 0..1200 {
        let tape = Tape::new();
        let mut losses = Vec::new();
        while losses.len() < 8 {
            let env = train_envs.choose(&mut rng).unwrap();
            let Some((raster, h, w, q, pos)) = sample_query(env, &mut rng) else {
                continue;
            };
            let ids: Vec<u32> = q.iter().map(|t| model.vocab.id(t)).collect();
            let map = Model::map_tensor(&tape, &raster, h, w);
            let logits = model
                .forward(&tape, &map, &ids, Ablation::Full, true, &mut rng)
                .unwrap();
            let (gh, gw) = (h / cfg.downsample, w / cfg.downsample);
            let target =
                tape.constant(&[gh * gw], gaussian_target(gh, gw, cell, pos, 1.0));
            losses.push(kl_loss(&logits, &target).unwrap());
        }
        let refs: Vec<&Tensor> = losses.iter().collect();
        let total = Tensor::concat(&refs, 0).sum().scale(1.0 / 8.0);
        model.params.zero_grads();
        tape.backward(&total).unwrap();
        adam.step(&model.params);

        if step % 200 == 199 {
            let mut eval_rng = rng_for(99, "probe-realmap-eval");
            let mut hits = 0;
            let mut n = 0;
            for env in eval_envs {
                for _ in 0..4 {
                    let Some((raster, h, w, q, pos)) = sample_query(env, &mut eval_rng)
                    else {
                        continue;
                    };
                    let ids: Vec<u32> = q.iter().map(|t| model.vocab.id(t)).collect();
                    let g =
                        model.predict(&raster, h, w, &ids, 0.25, Ablation::Full).unwrap();
                    let p = g.predicted_position();
                    let d = ((p.0 - pos.0).powi(2) + (p.1 - pos.1).powi(2)).sqrt();
                    n += 1;
                    hits += (d <= 3.0) as usize;
                }
            }
            println!("step {}: held-out within-3m {hits}/{n}", step + 1);
        }
    }
}
