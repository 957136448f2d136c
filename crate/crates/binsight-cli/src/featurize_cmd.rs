//! The featurize subcommand: walk a corpus directory, turn every binary into
//! a feature-vector row, and write one labeled CSV.
//!
//! Labels come from a `path<TAB>family` manifest when given; otherwise each
//! file's immediate parent directory names its family (the conventional
//! one-directory-per-family corpus layout). Without a manifest, files sitting
//! directly in the corpus root have no family directory and are ignored.
//!
//! Rows are ordered by relative path, so reruns produce byte-identical CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

use binsight::dataset::{write_csv, DatasetBuilder};
use binsight::featurize::{bytes_to_image, featurize_bytes, FeatureVector};

use crate::{read_input_text, write_output, CliError, FeaturizeArgs};

struct Candidate {
    rel_path: String,
    family: String,
}

pub fn run_featurize(args: FeaturizeArgs) -> Result<(), CliError> {
    let config = args.features.to_config()?;
    if !args.input.is_dir() {
        return Err(CliError::Usage(format!(
            "{} is not a readable directory",
            args.input.display()
        )));
    }

    let mut candidates = match &args.manifest {
        Some(path) => manifest_candidates(path)?,
        None => directory_candidates(&args.input)?,
    };
    candidates.sort_by(|a, b| a.rel_path.cmp(&b.rel_path));

    struct Outcome {
        rel_path: String,
        family: String,
        result: Result<(FeatureVector, Option<Vec<u8>>), String>,
    }

    let outcomes: Vec<Outcome> = candidates
        .into_par_iter()
        .map(|c| {
            let path = args.input.join(&c.rel_path);
            let result = fs::read(&path)
                .map_err(|e| format!("{}: {e}", c.rel_path))
                .and_then(|bytes| {
                    let features = featurize_bytes(&bytes, &config)
                        .map_err(|e| format!("{}: {e}", c.rel_path))?;
                    let pgm = if args.pgm_dir.is_some() {
                        let img = bytes_to_image(&bytes, &config.width_rule)
                            .map_err(|e| format!("{}: {e}", c.rel_path))?;
                        Some(img.to_pgm())
                    } else {
                        None
                    };
                    Ok((features, pgm))
                });
            Outcome { rel_path: c.rel_path, family: c.family, result }
        })
        .collect();

    let mut builder = DatasetBuilder::with_feature_len(config.feature_len());
    let mut skipped = 0usize;
    for outcome in outcomes {
        match outcome.result {
            Ok((features, pgm)) => {
                builder.push(features, &outcome.family, outcome.rel_path.clone())?;
                if let (Some(dir), Some(pgm)) = (&args.pgm_dir, pgm) {
                    let mut dump = dir.join(&outcome.rel_path);
                    let file_name = dump
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    dump.set_file_name(format!("{file_name}.pgm"));
                    write_output(&dump, &pgm)?;
                }
            }
            Err(message) => {
                if args.strict {
                    return Err(CliError::Data(format!("strict mode: {message}")));
                }
                eprintln!("warning: skipping {message}");
                skipped += 1;
            }
        }
    }

    let dataset = builder
        .build()
        .map_err(|_| CliError::Data(format!("no usable samples under {}", args.input.display())))?;
    write_output(&args.out, &write_csv(&dataset)?)?;
    println!(
        "featurized {} files ({} families, {} features) -> {}{}",
        dataset.len(),
        dataset.n_classes(),
        config.feature_len(),
        args.out.display(),
        if skipped > 0 { format!(", skipped {skipped}") } else { String::new() }
    );
    Ok(())
}

/// `path<TAB>family` lines; paths are relative to the input directory.
fn manifest_candidates(path: &Path) -> Result<Vec<Candidate>, CliError> {
    let text = read_input_text(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (rel_path, family) = line.split_once('\t').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected `path<TAB>family`",
                path.display(),
                idx + 1
            ))
        })?;
        if rel_path.is_empty() || family.is_empty() {
            return Err(CliError::Usage(format!(
                "{}:{}: empty path or family",
                path.display(),
                idx + 1
            )));
        }
        out.push(Candidate { rel_path: rel_path.to_string(), family: family.to_string() });
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("{} lists no samples", path.display())));
    }
    Ok(out)
}

fn directory_candidates(root: &Path) -> Result<Vec<Candidate>, CliError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).follow_links(false) {
        let entry =
            entry.map_err(|e| CliError::Usage(format!("cannot walk {}: {e}", root.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel: PathBuf = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root")
            .to_path_buf();
        let Some(family) = entry.path().parent().filter(|p| *p != root).and_then(|p| {
            p.file_name().map(|n| n.to_string_lossy().into_owned())
        }) else {
            eprintln!(
                "note: ignoring {} (not inside a family directory)",
                rel.display()
            );
            continue;
        };
        out.push(Candidate {
            rel_path: rel.to_string_lossy().replace(std::path::MAIN_SEPARATOR, "/"),
            family,
        });
    }
    if out.is_empty() {
        return Err(CliError::Data(format!(
            "no files inside family directories under {}",
            root.display()
        )));
    }
    Ok(out)
}
