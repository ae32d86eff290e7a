#![allow(dead_code)]

use ooc_core::model::ModelParams;
use ooc_core::{init_params, Instance, Label, PhraseKind, PhraseSet, PhraseSpan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// Instance with `n` one-word phrases and O(1) embedding entries.
pub fn instance(rng: &mut ChaCha8Rng, id: &str, d: usize, n: usize, label: Label) -> Instance {
    let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
    let caption = words.join(" ");
    let mut phrases = Vec::with_capacity(n);
    let mut cursor = 0;
    for w in &words {
        let len = w.chars().count();
        phrases.push(PhraseSpan { text: w.clone(), start: cursor, end: cursor + len, kind: PhraseKind::NP });
        cursor += len + 1;
    }
    let inst = Instance {
        id: id.to_string(),
        phrase_set: PhraseSet::new(caption.clone(), phrases).unwrap(),
        caption,
        image_emb: vector(rng, d),
        caption_emb: vector(rng, d),
        phrase_embs: (0..n).map(|_| vector(rng, d)).collect(),
        label,
        gold_phrase_labels: None,
    };
    inst.validate().unwrap();
    inst
}

/// Glorot init, then every tensor perturbed so none is zero: weight
/// matrices by their own Glorot bound (keeps hidden units out of
/// saturation), biases and embeddings by up to 0.3.
pub fn params(seed: u64, d: usize, h: usize, m: usize) -> ModelParams {
    let mut p = init_params(seed, d, h, m).unwrap();
    let layout = p.layout();
    let mut r = rng(seed ^ 0x5EED);
    for (info, t) in layout.iter().zip(p.tensors_mut()) {
        let bound = if info.name.ends_with(".w1") || info.name.ends_with(".w2") {
            (6.0 / (info.shape[0] + info.shape[1]) as f64).sqrt()
        } else {
            0.3
        };
        for v in t.iter_mut() {
            *v += r.random_range(-bound..bound);
        }
    }
    p
}

pub fn label(rng: &mut ChaCha8Rng) -> Label {
    if rng.random_bool(0.5) {
        Label::Pristine
    } else {
        Label::Falsified
    }
}

/// The trainer's starting distribution (Glorot weights) with biases and
/// embeddings moved off zero by up to 0.3.
pub fn init_like_params(seed: u64, d: usize, h: usize, m: usize) -> ModelParams {
    let mut p = init_params(seed, d, h, m).unwrap();
    let layout = p.layout();
    let mut r = rng(seed ^ 0x5EED);
    for (info, t) in layout.iter().zip(p.tensors_mut()) {
        if !(info.name.ends_with(".w1") || info.name.ends_with(".w2")) {
            t.iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
        }
    }
    p
}
