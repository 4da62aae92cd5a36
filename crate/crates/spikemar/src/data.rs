//! Byte-level corpora: synthetic generators, file loading, batching.
//!
//! Vocabulary is 256 raw bytes plus two reserved specials (SEP for the copy
//! task, PAD held in reserve). Every generator is a pure function of its
//! descriptor, so a corpus can be regenerated bit-identically from
//! `(kind, seed, size)`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOCAB_BYTES: usize = 256;
pub const SEP_TOKEN: u16 = 256;
pub const PAD_TOKEN: u16 = 257;
pub const VOCAB_SIZE: usize = 258;

/// How a corpus came to be; regeneration key for synthetic kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorDesc {
    Copy { seed: u64, n_sequences: usize, len: usize },
    Markov { seed: u64, order: usize, n_tokens: usize },
    File { path: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub sequences: Vec<Vec<u16>>,
    pub descriptor: GeneratorDesc,
}

impl Corpus {
    pub fn total_tokens(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.iter().all(Vec::is_empty)
    }
}

/// Sequences of the form `[prefix, SEP, prefix]`: a memorization task a
/// small model learns in minutes. `len` must be odd and >= 3 so the SEP
/// framing fits.
pub fn gen_copy_task(seed: u64, n_sequences: usize, len: usize) -> Result<Corpus> {
    if len < 3 || len % 2 == 0 {
        return Err(Error::Config(format!(
            "copy-task len must be odd and >= 3 to frame a SEP, got {len}"
        )));
    }
    let prefix_len = (len - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequences = (0..n_sequences)
        .map(|_| {
            let prefix: Vec<u16> = (0..prefix_len)
                .map(|_| rng.gen_range(0..VOCAB_BYTES as u16))
                .collect();
            let mut seq = prefix.clone();
            seq.push(SEP_TOKEN);
            seq.extend_from_slice(&prefix);
            seq
        })
        .collect();
    Ok(Corpus {
        sequences,
        descriptor: GeneratorDesc::Copy { seed, n_sequences, len },
    })
}

/// Byte histogram the order-0 markov generator samples from: bounded away
/// from zero so every byte keeps decent mass, skewed by the seed.
pub fn markov_histogram(seed: u64) -> Vec<f64> {
    context_weights(seed, &[])
}

fn context_weights(seed: u64, ctx: &[u16]) -> Vec<f64> {
    // derive a per-context stream deterministically from (seed, ctx)
    let mut h: u64 = 0xcbf29ce484222325;
    for &t in ctx {
        h = (h ^ t as u64).wrapping_mul(0x100000001b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
    let mut w: Vec<f64> = (0..VOCAB_BYTES).map(|_| 0.25 + rng.gen::<f64>()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> u16 {
    let mut u: f64 = rng.gen();
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i as u16;
        }
    }
    (weights.len() - 1) as u16
}

/// One long byte stream from an order-`order` markov source whose
/// per-context distributions are derived from the seed (order 0 is i.i.d.
/// draws from [`markov_histogram`]).
pub fn gen_markov_text(seed: u64, order: usize, n_tokens: usize) -> Result<Corpus> {
    if order > 3 {
        return Err(Error::Config(format!(
            "markov order must be <= 3 at desk scale, got {order}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut seq: Vec<u16> = Vec::with_capacity(n_tokens);
    for i in 0..n_tokens {
        let ctx_start = i.saturating_sub(order);
        let ctx = &seq[ctx_start..i];
        let w = context_weights(seed, ctx);
        seq.push(sample_weighted(&mut rng, &w));
    }
    Ok(Corpus {
        sequences: vec![seq],
        descriptor: GeneratorDesc::Markov { seed, order, n_tokens },
    })
}

/// Raw bytes of a file as one sequence.
pub fn load_text_file(path: &Path) -> Result<Corpus> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let seq: Vec<u16> = bytes.iter().map(|&b| b as u16).collect();
    Ok(Corpus {
        sequences: if seq.is_empty() { Vec::new() } else { vec![seq] },
        descriptor: GeneratorDesc::File {
            path: path.display().to_string(),
        },
    })
}

pub fn generate(desc: &GeneratorDesc) -> Result<Corpus> {
    match desc {
        GeneratorDesc::Copy { seed, n_sequences, len } => gen_copy_task(*seed, *n_sequences, *len),
        GeneratorDesc::Markov { seed, order, n_tokens } => gen_markov_text(*seed, *order, *n_tokens),
        GeneratorDesc::File { path } => load_text_file(Path::new(path)),
    }
}

// ---- corpus file format: manifest line + one hex line per sequence ----

const CORPUS_HEADER: &str = "spikemar-corpus v1";

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let desc = serde_json::to_string(&corpus.descriptor)
        .map_err(|e| Error::Config(format!("descriptor: {e}")))?;
    let mut out = format!("{CORPUS_HEADER} {desc}\n");
    for seq in &corpus.sequences {
        for &t in seq {
            out.push_str(&format!("{t:04x}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty corpus file".into()))?;
    let desc_json = header
        .strip_prefix(CORPUS_HEADER)
        .ok_or_else(|| Error::Config(format!("{} is not a corpus file", path.display())))?;
    let descriptor: GeneratorDesc = serde_json::from_str(desc_json.trim())
        .map_err(|e| Error::Config(format!("corpus descriptor: {e}")))?;
    let mut sequences = Vec::new();
    for line in lines {
        if line.len() % 4 != 0 {
            return Err(Error::Config("corrupt hex line in corpus".into()));
        }
        let seq: Vec<u16> = line
            .as_bytes()
            .chunks(4)
            .map(|c| {
                let s = std::str::from_utf8(c).map_err(|_| Error::Config("bad hex".into()))?;
                u16::from_str_radix(s, 16).map_err(|_| Error::Config("bad hex".into()))
            })
            .collect::<Result<_>>()?;
        sequences.push(seq);
    }
    Ok(Corpus { sequences, descriptor })
}

// ---- batching ----

/// One training batch: next-token pairs of equal-length rows.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

/// Deterministic shuffled batches of fixed-shape windows; the remainder
/// that does not fill a batch is dropped. Cycling past one epoch reshuffles
/// with a seed derived from the epoch index.
#[derive(Debug)]
pub struct Batcher {
    windows: Vec<Vec<u16>>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl Batcher {
    pub fn new(corpus: &Corpus, batch_size: usize, seq_len: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || seq_len == 0 {
            return Err(Error::Config("batch_size and seq_len must be >= 1".into()));
        }
        let mut windows = Vec::new();
        for seq in &corpus.sequences {
            for chunk in seq.chunks_exact(seq_len + 1) {
                windows.push(chunk.to_vec());
            }
        }
        if windows.len() < batch_size {
            return Err(Error::Config(format!(
                "corpus yields {} windows of {} tokens; need at least {} for one batch",
                windows.len(),
                seq_len + 1,
                batch_size
            )));
        }
        let mut b = Batcher {
            windows,
            batch_size,
            seed,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        };
        b.reshuffle();
        Ok(b)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.windows.len() / self.batch_size
    }

    fn reshuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(self.epoch));
        self.order = (0..self.windows.len()).collect();
        self.order.shuffle(&mut rng);
        self.cursor = 0;
    }

    pub fn next_batch(&mut self) -> Batch {
        if self.cursor + self.batch_size > self.batches_per_epoch() * self.batch_size {
            self.epoch += 1;
            self.reshuffle();
        }
        let mut inputs = Vec::with_capacity(self.batch_size);
        let mut targets = Vec::with_capacity(self.batch_size);
        for k in 0..self.batch_size {
            let w = &self.windows[self.order[self.cursor + k]];
            inputs.push(w[..w.len() - 1].iter().map(|&t| t as usize).collect());
            targets.push(w[1..].iter().map(|&t| t as usize).collect());
        }
        self.cursor += self.batch_size;
        Batch { inputs, targets }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_task_structure() {
        // fixed prefix example: len 5 gives [a, b, SEP, a, b]
        let c = gen_copy_task(3, 4, 5).unwrap();
        for seq in &c.sequences {
            assert_eq!(seq.len(), 5);
            assert_eq!(seq[2], SEP_TOKEN);
            assert_eq!(&seq[0..2], &seq[3..5]);
            assert!(seq[0] < 256 && seq[1] < 256);
        }
    }

    #[test]
    fn copy_task_rejects_bad_lengths() {
        assert!(gen_copy_task(1, 1, 2).is_err());
        assert!(gen_copy_task(1, 1, 4).is_err());
        assert!(gen_copy_task(1, 1, 1).is_err());
    }

    #[test]
    fn same_seed_is_bit_identical_distinct_seeds_differ() {
        let a = gen_copy_task(7, 20, 9).unwrap();
        let b = gen_copy_task(7, 20, 9).unwrap();
        assert_eq!(a, b);
        // collision check over 100 trials
        let mut diffs = 0;
        for s in 0..100u64 {
            let x = gen_copy_task(s, 5, 9).unwrap();
            let y = gen_copy_task(s + 1000, 5, 9).unwrap();
            if x.sequences != y.sequences {
                diffs += 1;
            }
        }
        assert_eq!(diffs, 100);
    }

    #[test]
    fn all_tokens_in_vocab() {
        let c = gen_markov_text(11, 2, 5000).unwrap();
        assert!(c.sequences[0].iter().all(|&t| (t as usize) < VOCAB_SIZE));
        let c = gen_copy_task(11, 10, 7).unwrap();
        for s in &c.sequences {
            assert!(s.iter().all(|&t| (t as usize) < VOCAB_SIZE));
        }
    }

    #[test]
    fn markov_order_zero_matches_histogram_chi_squared() {
        let seed = 5;
        let n = 100_000usize;
        let c = gen_markov_text(seed, 0, n).unwrap();
        let hist = markov_histogram(seed);
        let mut counts = vec![0usize; VOCAB_BYTES];
        for &t in &c.sequences[0] {
            counts[t as usize] += 1;
        }
        let chi2: f64 = (0..VOCAB_BYTES)
            .map(|i| {
                let expected = hist[i] * n as f64;
                (counts[i] as f64 - expected).powi(2) / expected
            })
            .sum();
        // 255 degrees of freedom; the 99.9% quantile is ~310
        assert!(chi2 < 350.0, "chi-squared {chi2} too large");
    }

    #[test]
    fn corpus_file_roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.smcorp");
        for corpus in [
            gen_copy_task(9, 6, 7).unwrap(),
            gen_markov_text(9, 1, 300).unwrap(),
        ] {
            save_corpus(&corpus, &path).unwrap();
            let loaded = load_corpus(&path).unwrap();
            assert_eq!(loaded, corpus);
        }
    }

    #[test]
    fn empty_file_gives_empty_corpus_and_batcher_refuses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, b"").unwrap();
        let corpus = load_text_file(&path).unwrap();
        assert!(corpus.is_empty());
        let err = Batcher::new(&corpus, 1, 4, 0).unwrap_err();
        assert!(err.to_string().contains("windows"));
    }

    #[test]
    fn ten_sequences_batch_three_gives_three_batches() {
        let corpus = gen_copy_task(1, 10, 9).unwrap();
        let b = Batcher::new(&corpus, 3, 8, 0).unwrap();
        assert_eq!(b.batches_per_epoch(), 3);
    }

    #[test]
    fn batches_are_deterministic_and_shaped() {
        let corpus = gen_copy_task(2, 12, 9).unwrap();
        let mut b1 = Batcher::new(&corpus, 4, 8, 5).unwrap();
        let mut b2 = Batcher::new(&corpus, 4, 8, 5).unwrap();
        for _ in 0..7 {
            let x = b1.next_batch();
            let y = b2.next_batch();
            assert_eq!(x.inputs, y.inputs);
            assert_eq!(x.targets, y.targets);
            for (i, t) in x.inputs.iter().zip(&x.targets) {
                assert_eq!(i.len(), 8);
                assert_eq!(t.len(), 8);
                assert_eq!(i[1..], t[..7], "targets are inputs shifted by one");
            }
        }
    }
}
