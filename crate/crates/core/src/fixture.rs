//! Seeded synthetic datasets for the end-to-end pipeline.
//!
//! Anchors imitate home-video frames with short caregiver utterances;
//! candidates imitate a general image-caption pool. Image vectors cluster
//! around per-object concept vectors so image-to-image similarity is
//! meaningful, and a fraction of anchors get captions about a different
//! object so the similarity filter has something to drop.

use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{store_embeddings, EmbeddingError, EmbeddingSet};
use crate::manifest::{write_manifest, Manifest, ManifestError, PairRecord, Source};

const OBJECTS: [&str; 24] = [
    "ball", "dog", "cat", "cup", "spoon", "book", "car", "truck", "duck", "shoe", "hat", "apple",
    "banana", "bottle", "blanket", "chair", "bird", "train", "block", "bear", "puzzle", "bowl",
    "sock", "flower",
];
const COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "big", "little", "soft", "shiny"];
const UTTERANCES: [&str; 6] = [
    "look at the {c} {o}",
    "where is the {o}",
    "can you get the {o}",
    "that is a {c} {o}",
    "oh you have the {o}",
    "the {o} is over there",
];
const DESCRIPTIONS: [&str; 6] = [
    "A {c} {o} resting on a wooden table next to a window.",
    "Close-up photograph of a {c} {o} on the floor of a living room.",
    "A child reaching for a {c} {o} in a brightly lit kitchen.",
    "An old {o} sitting on a shelf beside several other household items.",
    "A {c} {o} lying in the grass in a public park on a sunny day.",
    "Two people looking at a {c} {o} displayed in a shop window.",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub n_anchors: usize,
    pub n_candidates: usize,
    pub dim: usize,
    /// Share of anchors whose caption describes a different object.
    pub mismatched_fraction: f64,
    /// Standard deviation of per-coordinate image noise around the concept.
    pub image_noise: f64,
    /// Standard deviation of per-coordinate caption noise around the image.
    pub text_noise: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 0,
            n_anchors: 200,
            n_candidates: 1000,
            dim: 16,
            mismatched_fraction: 0.15,
            image_noise: 0.12,
            text_noise: 0.08,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub anchors: Manifest,
    pub candidates: Manifest,
    /// Image embeddings for every anchor and candidate pair_id.
    pub img: EmbeddingSet,
    /// Caption embeddings for every anchor and candidate pair_id.
    pub txt: EmbeddingSet,
}

/// File locations of a written fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FixturePaths {
    pub anchors: PathBuf,
    pub candidates: PathBuf,
    pub img: PathBuf,
    pub txt: PathBuf,
}

impl FixturePaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        FixturePaths {
            anchors: d.join("anchors.jsonl"),
            candidates: d.join("candidates.jsonl"),
            img: d.join("img.emb"),
            txt: d.join("txt.emb"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn unit_f32(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

fn fill(template: &str, color: &str, object: &str) -> String {
    template.replace("{c}", color).replace("{o}", object)
}

impl Fixture {
    pub fn generate(cfg: &FixtureConfig) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let concepts: Vec<Vec<f64>> = OBJECTS.iter().map(|_| gaussian(&mut rng, cfg.dim, 1.0)).collect();
        let concepts: Vec<Vec<f64>> = concepts
            .iter()
            .map(|c| unit_f32(c).into_iter().map(f64::from).collect())
            .collect();

        let mut img_rows = Vec::with_capacity(cfg.n_anchors + cfg.n_candidates);
        let mut txt_rows = Vec::with_capacity(cfg.n_anchors + cfg.n_candidates);
        let mut make = |rng: &mut ChaCha8Rng, id: &str, obj: usize, said: usize| {
            let noise = gaussian(rng, cfg.dim, cfg.image_noise);
            let image: Vec<f64> = concepts[obj].iter().zip(&noise).map(|(c, e)| c + e).collect();
            let noise = gaussian(rng, cfg.dim, cfg.text_noise);
            let text: Vec<f64> = if said == obj {
                image.iter().zip(&noise).map(|(c, e)| c + e).collect()
            } else {
                concepts[said].iter().zip(&noise).map(|(c, e)| c + e).collect()
            };
            img_rows.push((id.to_owned(), unit_f32(&image)));
            txt_rows.push((id.to_owned(), unit_f32(&text)));
        };

        let mut anchors = Vec::with_capacity(cfg.n_anchors);
        for i in 0..cfg.n_anchors {
            let id = format!("sc-{i:05}");
            let obj = rng.random_range(0..OBJECTS.len());
            let said = if rng.random_bool(cfg.mismatched_fraction) {
                (obj + rng.random_range(1..OBJECTS.len())) % OBJECTS.len()
            } else {
                obj
            };
            let color = COLORS.choose(&mut rng).expect("non-empty");
            let utt = UTTERANCES.choose(&mut rng).expect("non-empty");
            make(&mut rng, &id, obj, said);
            anchors.push(PairRecord::new(&id, format!("frames/{id}.jpg"), fill(utt, color, OBJECTS[said]), Source::Saycam));
        }

        let mut candidates = Vec::with_capacity(cfg.n_candidates);
        for i in 0..cfg.n_candidates {
            let id = format!("gen-{i:05}");
            let obj = rng.random_range(0..OBJECTS.len());
            let color = COLORS.choose(&mut rng).expect("non-empty");
            let desc = DESCRIPTIONS.choose(&mut rng).expect("non-empty");
            make(&mut rng, &id, obj, obj);
            candidates.push(PairRecord::new(&id, format!("pool/{id}.jpg"), fill(desc, color, OBJECTS[obj]), Source::General));
        }

        Fixture {
            anchors: Manifest::new(anchors).expect("generated ids are unique"),
            candidates: Manifest::new(candidates).expect("generated ids are unique"),
            img: EmbeddingSet::from_rows(cfg.dim, img_rows, true).expect("rows are unit length"),
            txt: EmbeddingSet::from_rows(cfg.dim, txt_rows, true).expect("rows are unit length"),
        }
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<FixturePaths, FixtureError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| ManifestError::io(dir, e))?;
        let p = FixturePaths::in_dir(dir);
        write_manifest(&self.anchors, &p.anchors)?;
        write_manifest(&self.candidates, &p.candidates)?;
        store_embeddings(&self.img, &p.img)?;
        store_embeddings(&self.txt, &p.txt)?;
        Ok(p)
    }
}
