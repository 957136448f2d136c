//! Synthetic family generator.
//!
//! Each family is defined by a byte motif that gets tiled to a seeded random
//! length and then noised byte-by-byte. Tiling survives the featurizer's
//! resize, so families stay visually coherent the way real binaries do, and
//! "twin" families that share most of a motif end up visually confusable on
//! purpose.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub name: String,
    pub motif: Vec<u8>,
    pub count: usize,
    /// Probability that each generated byte is replaced by a uniform random
    /// byte.
    pub mutation_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
}

/// Declares that `second`'s motif starts with the leading `share` fraction of
/// `first`'s motif, making the two families near-duplicates visually.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinPair {
    pub first: usize,
    pub second: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthSpec {
    pub families: Vec<FamilySpec>,
    pub twins: Vec<TwinPair>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::InvalidArgument("spec declares no families".into()));
        }
        let mut names = std::collections::HashSet::new();
        for f in &self.families {
            if f.name.is_empty() {
                return Err(Error::InvalidArgument("family with empty name".into()));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate family name {:?}",
                    f.name
                )));
            }
            if f.count < 2 {
                return Err(Error::InvalidArgument(format!(
                    "family {:?} needs at least 2 samples, got {}",
                    f.name, f.count
                )));
            }
            if f.motif.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "family {:?} has an empty motif",
                    f.name
                )));
            }
            if !(0.0..=1.0).contains(&f.mutation_rate) {
                return Err(Error::InvalidArgument(format!(
                    "family {:?} mutation rate {} outside [0, 1]",
                    f.name, f.mutation_rate
                )));
            }
            if f.min_len == 0 || f.min_len > f.max_len {
                return Err(Error::InvalidArgument(format!(
                    "family {:?} has bad length range {}..{}",
                    f.name, f.min_len, f.max_len
                )));
            }
        }
        for t in &self.twins {
            if t.first >= self.families.len() || t.second >= self.families.len() {
                return Err(Error::InvalidArgument("twin pair references unknown family".into()));
            }
            if t.first == t.second {
                return Err(Error::InvalidArgument("twin pair references one family twice".into()));
            }
            if !(0.0..=1.0).contains(&t.share) {
                return Err(Error::InvalidArgument(format!(
                    "twin share {} outside [0, 1]",
                    t.share
                )));
            }
            if self.families[t.first].motif.len() != self.families[t.second].motif.len() {
                return Err(Error::InvalidArgument(format!(
                    "twin families {:?} and {:?} must have equal motif lengths",
                    self.families[t.first].name, self.families[t.second].name
                )));
            }
        }
        Ok(())
    }

    /// Motifs with twin sharing applied: the second family of each pair gets
    /// the leading `floor(share * len)` bytes of the first family's motif.
    pub fn effective_motifs(&self) -> Vec<Vec<u8>> {
        let mut motifs: Vec<Vec<u8>> = self.families.iter().map(|f| f.motif.clone()).collect();
        for t in &self.twins {
            let shared = (t.share * motifs[t.second].len() as f64).floor() as usize;
            let prefix = self.families[t.first].motif[..shared].to_vec();
            motifs[t.second][..shared].copy_from_slice(&prefix);
        }
        motifs
    }

    /// Parses the TOML spec format (see the repository README for the
    /// schema). Syntax errors carry the offending line number.
    pub fn from_toml_str(text: &str) -> Result<SynthSpec> {
        let file: SpecFile = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::parse(line, e.message().to_string())
        })?;

        let mut families = Vec::with_capacity(file.family.len());
        for entry in file.family {
            let motif = hex::decode(&entry.motif).map_err(|e| {
                Error::InvalidArgument(format!(
                    "family {:?}: motif is not a hex string: {e}",
                    entry.name
                ))
            })?;
            families.push(FamilySpec {
                name: entry.name,
                motif,
                count: entry.count,
                mutation_rate: entry.mutation,
                min_len: entry.min_len,
                max_len: entry.max_len,
            });
        }
        let index_of = |name: &str| {
            families
                .iter()
                .position(|f| f.name == name)
                .ok_or_else(|| Error::InvalidArgument(format!("twin references unknown family {name:?}")))
        };
        let mut twins = Vec::with_capacity(file.twin.len());
        for entry in file.twin {
            twins.push(TwinPair {
                first: index_of(&entry.first)?,
                second: index_of(&entry.second)?,
                share: entry.share,
            });
        }
        let spec = SynthSpec { families, twins };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default)]
    family: Vec<FamilyEntry>,
    #[serde(default)]
    twin: Vec<TwinEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyEntry {
    name: String,
    motif: String,
    count: usize,
    mutation: f64,
    min_len: usize,
    max_len: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TwinEntry {
    first: String,
    second: String,
    share: f64,
}

/// One generated binary, addressed relative to the corpus root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSample {
    pub rel_path: String,
    pub family: usize,
    pub bytes: Vec<u8>,
}

/// Generates the corpus in memory. Each sample is a pure function of
/// (spec, seed, family index, sample index), so per-family generation order
/// and parallelism cannot change the output.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<Vec<SynthSample>> {
    spec.validate()?;
    let motifs = spec.effective_motifs();
    let per_family: Vec<Vec<SynthSample>> = spec
        .families
        .par_iter()
        .enumerate()
        .map(|(fi, fam)| {
            let family_seed = derive_seed(seed, fi as u64);
            let motif = &motifs[fi];
            (0..fam.count)
                .map(|si| {
                    let mut rng = SplitMix64::stream(family_seed, si as u64);
                    let span = (fam.max_len - fam.min_len + 1) as u64;
                    let len = fam.min_len + rng.next_below(span) as usize;
                    let mut bytes: Vec<u8> = (0..len).map(|i| motif[i % motif.len()]).collect();
                    for b in bytes.iter_mut() {
                        if rng.next_f64() < fam.mutation_rate {
                            *b = rng.next_byte();
                        }
                    }
                    SynthSample {
                        rel_path: format!("{0}/{0}_{1:04}.bin", fam.name, si),
                        family: fi,
                        bytes,
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_family.into_iter().flatten().collect())
}

/// Label manifest: one `path<TAB>family` line per sample.
pub fn manifest(spec: &SynthSpec, samples: &[SynthSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&s.rel_path);
        out.push('\t');
        out.push_str(&spec.families[s.family].name);
        out.push('\n');
    }
    out
}

/// Writes the corpus under `dir` (one subdirectory per family) plus a
/// `labels.tsv` manifest. Returns the number of binaries written.
pub fn write_corpus(spec: &SynthSpec, seed: u64, dir: &Path) -> Result<usize> {
    let samples = generate(spec, seed)?;
    for fam in &spec.families {
        fs::create_dir_all(dir.join(&fam.name))?;
    }
    for s in &samples {
        fs::write(dir.join(&s.rel_path), &s.bytes)?;
    }
    fs::write(dir.join("labels.tsv"), manifest(spec, &samples))?;
    Ok(samples.len())
}
