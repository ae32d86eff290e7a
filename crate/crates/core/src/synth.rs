//! Planted-culprit synthetic benchmark.
//!
//! Every instance is built around a latent unit "scene" vector. The image and
//! pristine phrases are noisy views of that scene; in a falsified instance
//! the culprit phrases are views of a second, nearly orthogonal scene. Each
//! instance draws from its own counter-based stream, so generation is
//! order-independent.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chunker::{PhraseKind, PhraseSet, PhraseSpan};
use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::prob::Label;
use crate::seed;

/// Culprit scenes are resampled until `|cos(s, s')|` drops below this.
pub const MAX_SCENE_COSINE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub d: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub falsified_fraction: f64,
    pub culprits_per_falsified: usize,
    pub phrase_count_range: [usize; 2],
    pub scene_noise_sigma: f64,
    pub max_phrases: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            d: 64,
            n_train: 2000,
            n_val: 200,
            n_test: 1000,
            falsified_fraction: 0.5,
            culprits_per_falsified: 1,
            phrase_count_range: [3, 6],
            scene_noise_sigma: 0.1,
            max_phrases: 8,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [min, max] = self.phrase_count_range;
        if self.d == 0 {
            return Err(Error::config("d must be positive"));
        }
        if !(self.falsified_fraction > 0.0 && self.falsified_fraction < 1.0) {
            return Err(Error::config("falsified_fraction must lie in (0, 1)"));
        }
        if min < 1 || min > max {
            return Err(Error::config("phrase_count_range must satisfy 1 <= min <= max"));
        }
        if max > self.max_phrases {
            return Err(Error::config(format!(
                "phrase_count_range max {max} exceeds max_phrases {}",
                self.max_phrases
            )));
        }
        if max > TEMPLATE_SLOTS.len() {
            return Err(Error::config(format!(
                "caption template supports at most {} phrases",
                TEMPLATE_SLOTS.len()
            )));
        }
        if self.culprits_per_falsified < 1 || self.culprits_per_falsified > min {
            return Err(Error::config(
                "culprits_per_falsified must lie in [1, phrase_count_range min]",
            ));
        }
        if !(self.scene_noise_sigma >= 0.0 && self.scene_noise_sigma.is_finite()) {
            return Err(Error::config("scene_noise_sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub train: Vec<Instance>,
    pub val: Vec<Instance>,
    pub test: Vec<Instance>,
}

struct Slot {
    connector: &'static str,
    kind: PhraseKind,
    words: &'static [&'static str],
}

const TEMPLATE_SLOTS: [Slot; 8] = [
    Slot {
        connector: "",
        kind: PhraseKind::NE,
        words: &[
            "Maria Lopez", "John Carter", "Amina Diallo", "Kenji Sato",
            "Elena Petrova", "Omar Haddad", "Lucas Silva", "Grace Okafor",
        ],
    },
    Slot {
        connector: " ",
        kind: PhraseKind::VP,
        words: &["visits", "greets", "addresses", "leaves", "inspects", "tours", "opens", "watches"],
    },
    Slot {
        connector: " ",
        kind: PhraseKind::NP,
        words: &[
            "the crowd", "a new hospital", "the stadium", "the main square",
            "a small school", "the harbor", "the old bridge", "a local market",
        ],
    },
    Slot {
        connector: " in ",
        kind: PhraseKind::NE,
        words: &["Spain", "Paris", "Nairobi", "Lima", "Oslo", "Cairo", "Manila", "Toronto"],
    },
    Slot {
        connector: " on ",
        kind: PhraseKind::NE,
        words: &["Sunday", "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday"],
    },
    Slot {
        connector: " during ",
        kind: PhraseKind::NP,
        words: &[
            "a handball tournament", "the annual festival", "a peace summit",
            "the election campaign", "a charity concert", "the book fair",
        ],
    },
    Slot {
        connector: " with ",
        kind: PhraseKind::NP,
        words: &["local officials", "the team", "several ministers", "young volunteers", "the delegation"],
    },
    Slot {
        connector: " after ",
        kind: PhraseKind::NP,
        words: &["the ceremony", "a long meeting", "the final match", "a press conference"],
    },
];

fn template_caption(rng: &mut ChaCha8Rng, k: usize) -> PhraseSet {
    let mut caption = String::new();
    let mut phrases = Vec::with_capacity(k);
    let mut len = 0;
    for slot in TEMPLATE_SLOTS.iter().take(k) {
        let word = slot.words[rng.random_range(0..slot.words.len())];
        caption.push_str(slot.connector);
        len += slot.connector.chars().count();
        let start = len;
        caption.push_str(word);
        len += word.chars().count();
        phrases.push(PhraseSpan {
            text: word.to_string(),
            start,
            end: len,
            kind: slot.kind,
        });
    }
    PhraseSet {
        phrases,
        source_caption: caption,
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_scene(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, d);
        if v.iter().any(|&x| x != 0.0) {
            return normalize(v);
        }
    }
}

fn noisy_view(rng: &mut ChaCha8Rng, scene: &[f64], sigma: f64) -> Vec<f64> {
    let noise = gaussian(rng, scene.len());
    normalize(scene.iter().zip(noise).map(|(s, n)| s + sigma * n).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Exactly `floor(n * fraction)` positions are falsified, spread evenly.
fn is_falsified_slot(index: usize, fraction: f64) -> bool {
    let at = |i: usize| (i as f64 * fraction).floor();
    at(index + 1) > at(index)
}

fn make_instance(cfg: &SynthConfig, split: &str, split_tag: u64, index: usize) -> Instance {
    let mut rng = seed::stream(cfg.seed, &[split_tag, index as u64]);
    let [min, max] = cfg.phrase_count_range;
    let k = rng.random_range(min..=max);
    let phrase_set = template_caption(&mut rng, k);
    let falsified = is_falsified_slot(index, cfg.falsified_fraction);

    let sigma = cfg.scene_noise_sigma;
    let scene = unit_scene(&mut rng, cfg.d);
    let image_emb = noisy_view(&mut rng, &scene, sigma);

    let mut gold = vec![Label::Pristine; k];
    let mut other_scene = None;
    if falsified {
        for pos in sample(&mut rng, k, cfg.culprits_per_falsified) {
            gold[pos] = Label::Falsified;
        }
        let mut s2 = unit_scene(&mut rng, cfg.d);
        while cosine(&scene, &s2).abs() >= MAX_SCENE_COSINE {
            s2 = unit_scene(&mut rng, cfg.d);
        }
        other_scene = Some(s2);
    }

    let phrase_embs: Vec<Vec<f64>> = gold
        .iter()
        .map(|label| match (label, &other_scene) {
            (Label::Falsified, Some(s2)) => noisy_view(&mut rng, s2, sigma),
            _ => noisy_view(&mut rng, &scene, sigma),
        })
        .collect();

    let mut mean = vec![0.0; cfg.d];
    for v in &phrase_embs {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / k as f64;
        }
    }
    let caption_emb = noisy_view(&mut rng, &mean, sigma);

    Instance {
        id: format!("{split}-{index:06}"),
        caption: phrase_set.source_caption.clone(),
        phrase_set,
        image_emb,
        caption_emb,
        phrase_embs,
        label: if falsified { Label::Falsified } else { Label::Pristine },
        gold_phrase_labels: Some(gold),
    }
}

/// Deterministic in `cfg` (including its seed); the three splits are drawn
/// from disjoint streams.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let split = |name: &str, tag: u64, n: usize| -> Vec<Instance> {
        (0..n).map(|i| make_instance(cfg, name, tag, i)).collect()
    };
    Ok(SyntheticDataset {
        train: split("train", 1, cfg.n_train),
        val: split("val", 2, cfg.n_val),
        test: split("test", 3, cfg.n_test),
    })
}
