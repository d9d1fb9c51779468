//! Planted-structure multilingual fixture.
//!
//! Vectors share a constant offset and split into a low-dimensional
//! "nuisance" block and a wider "semantic" block. Every pair has a latent
//! relatedness `ρ ∈ [0, 1]`; the second sentence's vector is correlated with
//! the first by `ρ` on one block only, and the gold label is `ρ`.
//!
//! * The target and the friendly sources have high nuisance variance and
//!   relatedness planted in the semantic block. Raw cosine is swamped by
//!   nuisance noise; whitening rebalances the blocks and exposes `ρ`.
//! * The adversarial source plants relatedness in the nuisance block and
//!   inflates semantic variance, so whitening hurts its ranking and pooling
//!   its sentences into a whitening fit distorts the target geometry.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{write_dataset, PairDataset, PairRecord};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Nuisance,
    Semantic,
}

#[derive(Debug, Clone, Copy)]
struct Profile {
    nuisance_std: f64,
    semantic_std: f64,
    related: Block,
}

const FRIENDLY: Profile = Profile {
    nuisance_std: 10.0,
    semantic_std: 1.0,
    related: Block::Semantic,
};

const ADVERSARIAL: Profile = Profile {
    nuisance_std: 10.0,
    semantic_std: 10.0,
    related: Block::Nuisance,
};

#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub nuisance_dims: usize,
    pub semantic_dims: usize,
    pub offset: f64,
    pub target_lang: String,
    pub target_pairs: usize,
    /// `(lang, pair count)` for each friendly source.
    pub friendly: Vec<(String, usize)>,
    pub adversarial: (String, usize),
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            nuisance_dims: 4,
            semantic_dims: 12,
            offset: 3.0,
            target_lang: "esp".into(),
            target_pairs: 300,
            friendly: vec![
                ("hau".into(), 260),
                ("ind".into(), 300),
                ("kin".into(), 340),
            ],
            adversarial: ("mar".into(), 300),
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub store: EmbeddingStore,
    pub target_lang: String,
    /// Target pairs without labels.
    pub target: PairDataset,
    /// Planted relatedness of each target pair.
    pub target_gold: Vec<f64>,
    /// Labeled sources: friendly ones first, then the adversarial one.
    pub sources: Vec<PairDataset>,
    pub friendly_langs: Vec<String>,
    pub adversarial_lang: String,
}

struct Generator<'a> {
    cfg: &'a FixtureConfig,
    rng: ChaCha8Rng,
    store: EmbeddingStore,
}

impl Generator<'_> {
    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn pairs(
        &mut self,
        lang: &str,
        n: usize,
        profile: Profile,
        labeled: bool,
    ) -> Result<(PairDataset, Vec<f64>)> {
        let (nd, sd) = (self.cfg.nuisance_dims, self.cfg.semantic_dims);
        let mut records = Vec::with_capacity(n);
        let mut gold = Vec::with_capacity(n);
        for i in 0..n {
            let rho: f64 = self.rng.gen();
            let u: Vec<f64> = (0..nd + sd).map(|_| self.normal()).collect();
            let v: Vec<f64> = (0..nd + sd)
                .map(|j| {
                    let block = if j < nd {
                        Block::Nuisance
                    } else {
                        Block::Semantic
                    };
                    let noise = self.normal();
                    if block == profile.related {
                        rho * u[j] + (1.0 - rho * rho).sqrt() * noise
                    } else {
                        noise
                    }
                })
                .collect();
            let embed = |z: &[f64]| -> Vec<f64> {
                z.iter()
                    .enumerate()
                    .map(|(j, x)| {
                        let s = if j < nd {
                            profile.nuisance_std
                        } else {
                            profile.semantic_std
                        };
                        self.cfg.offset + s * x
                    })
                    .collect()
            };
            let (ea, eb) = (embed(&u), embed(&v));
            let s1 = format!("{lang} sentence {i} a");
            let s2 = format!("{lang} sentence {i} b");
            self.store.insert(&s1, lang, ea)?;
            self.store.insert(&s2, lang, eb)?;
            records.push(PairRecord {
                pair_id: format!("{lang}-{i:04}"),
                lang: lang.to_string(),
                sentence_1: s1,
                sentence_2: s2,
                label: labeled.then_some(rho),
            });
            gold.push(rho);
        }
        Ok((PairDataset::new(records)?, gold))
    }
}

impl Fixture {
    pub fn generate(cfg: &FixtureConfig) -> Result<Self> {
        let mut g = Generator {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            store: EmbeddingStore::new(cfg.nuisance_dims + cfg.semantic_dims),
        };
        let (target, target_gold) = g.pairs(&cfg.target_lang, cfg.target_pairs, FRIENDLY, false)?;
        let mut sources = Vec::new();
        for (lang, n) in &cfg.friendly {
            sources.push(g.pairs(lang, *n, FRIENDLY, true)?.0);
        }
        let (adv_lang, adv_n) = &cfg.adversarial;
        sources.push(g.pairs(adv_lang, *adv_n, ADVERSARIAL, true)?.0);
        Ok(Self {
            store: g.store,
            target_lang: cfg.target_lang.clone(),
            target,
            target_gold,
            sources,
            friendly_langs: cfg.friendly.iter().map(|(l, _)| l.clone()).collect(),
            adversarial_lang: adv_lang.clone(),
        })
    }

    /// Target pairs with the planted relatedness as labels.
    pub fn labeled_target(&self) -> PairDataset {
        let records = self
            .target
            .records()
            .iter()
            .zip(&self.target_gold)
            .map(|(r, g)| PairRecord {
                label: Some(*g),
                ..r.clone()
            })
            .collect();
        PairDataset::from_records_unchecked(records)
    }

    /// Writes `store.jsonl`, `target.csv` (unlabeled) and `sources.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |p: &Path, e| Error::io(p, e);
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let p = dir.join("store.jsonl");
        let f = std::fs::File::create(&p).map_err(|e| io(&p, e))?;
        self.store.write(std::io::BufWriter::new(f))?;
        let p = dir.join("target.csv");
        let f = std::fs::File::create(&p).map_err(|e| io(&p, e))?;
        write_dataset(&self.target, f)?;
        let p = dir.join("sources.csv");
        let f = std::fs::File::create(&p).map_err(|e| io(&p, e))?;
        write_dataset(&PairDataset::concat(&self.sources)?, f)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_langs() {
        let fx = Fixture::generate(&FixtureConfig::default()).unwrap();
        assert_eq!(fx.target.len(), 300);
        assert!(!fx.target.is_labeled());
        assert_eq!(fx.sources.len(), 4);
        assert_eq!(fx.sources[0].len(), 260);
        assert!(fx.sources.iter().all(PairDataset::is_labeled));
        assert_eq!(fx.store.len(), 2 * (300 + 260 + 300 + 340 + 300));
        assert_eq!(fx.store.dim(), 16);
    }

    #[test]
    fn deterministic() {
        let a = Fixture::generate(&FixtureConfig::default()).unwrap();
        let b = Fixture::generate(&FixtureConfig::default()).unwrap();
        assert_eq!(a.store.records(), b.store.records());
        assert_eq!(a.target_gold, b.target_gold);
    }
}
