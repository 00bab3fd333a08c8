//! Scratch probe: same data, but dialogs reduced to bare content keywords.

use std::collections::BTreeSet;

use led_lab::dataset::load_dataset;
use led_lab::eval::{evaluate_model, metrics_from};
use led_lab::model::{Ablation, Model, ModelConfig};
use led_lab::text::{dialog_tokens, DialogVariant, Vocabulary};
use led_lab::train::{train, TrainConfig};
use led_lab::worldgen::{Message, Role, Split};

#[test]
fn probe_keyword_dialogs() {
    let mut keywords: BTreeSet<String> = [
        "hallway", "kitchen", "bedroom", "bathroom", "lounge", "office", "dining",
        "library", "gym", "storage", "red", "blue", "green", "yellow", "purple",
        "orange", "white", "black", "pink", "brown",
    ]
    .into_iter()
    .map(str::to_string)
    .collect();
    let catalog = std::fs::read_to_string("assets/catalog.txt").unwrap();
    let mut in_types = false;
    for line in catalog.lines() {
        let line = line.trim();
        if line == "[types]" {
            in_types = true;
        } else if line.starts_with('[') {
            in_types = false;
        } else if in_types && !line.is_empty() && !line.starts_with('#') {
            keywords.insert(line.to_string());
        }
    }

    let mut ds = load_dataset(std::path::Path::new("/tmp/bench10/data")).unwrap();
    let room_names = [
        "hallway", "kitchen", "bedroom", "bathroom", "lounge", "office", "dining",
        "library", "gym", "storage",
    ];
    for ep in &mut ds.episodes {
        // keep keywords only from the last Observer message naming a room
        let last = ep
            .dialog
            .iter()
            .rposition(|m| {
                m.role == Role::Observer && room_names.iter().any(|r| m.text.contains(r))
            })
            .unwrap_or(0);
        let kept: Vec<String> = dialog_tokens(&ep.dialog[last..=last])
            .into_iter()
            .filter(|t| keywords.contains(t))
            .collect();
        ep.dialog = vec![Message { role: Role::Observer, text: kept.join(" ") }];
    }

    let train_eps: Vec<_> = ds.episodes_in(Split::Train);
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
        dropout: 0.1,
        residual: true,
    };
    let mut model = Model::new(cfg, vocab, 1).unwrap();
    let tc = TrainConfig {
        epochs: 15,
        learning_rate: 0.003,
        batch_size: 10,
        sigma_m: 2.0,
        augment: false,
        ..Default::default()
    };
    let report = train(&mut model, &ds.envs, &ds.episodes, &tc, 1, None).unwrap();
    for (epoch, split, m) in &report.history {
        if *split == "val_unseen" {
            println!("epoch {epoch}: val acc3 {:.3} le {:.2}", m.acc_3m, m.le_mean_m);
        }
    }
    let unseen = ds.episodes_in(Split::ValUnseen);
    let r = evaluate_model(&model, &ds.envs, &unseen, DialogVariant::Full, Ablation::Full)
        .unwrap();
    println!("final val acc3 {:.3}", metrics_from(&r).acc_3m);
}
