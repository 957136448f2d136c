//! Labeled feature-vector datasets: CSV interchange, stratified train/test
//! splitting, stratified fold assignment, and a synthetic corpus generator.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::featurize::FeatureVector;
use crate::rng::SplitMix64;

pub mod synth;

/// One feature vector with its class index and a human-readable origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: usize,
    pub source_name: String,
}

/// A set of labeled samples with a shared label vocabulary.
///
/// Invariants enforced at construction: every feature vector has length
/// `feature_len`, label names are unique and non-empty, and every sample's
/// label indexes into `label_names`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    label_names: Vec<String>,
    feature_len: usize,
}

impl Dataset {
    pub fn new(
        samples: Vec<LabeledSample>,
        label_names: Vec<String>,
        feature_len: usize,
    ) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, name) in label_names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidArgument("empty label name".into()));
            }
            if seen.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate label name {name:?}")));
            }
        }
        for s in &samples {
            if s.features.len() != feature_len {
                return Err(Error::shape(
                    format!("feature length {feature_len}"),
                    format!("{} in sample {:?}", s.features.len(), s.source_name),
                ));
            }
            if s.label >= label_names.len() {
                return Err(Error::InvalidArgument(format!(
                    "sample {:?} has label index {} but only {} classes exist",
                    s.source_name,
                    s.label,
                    label_names.len()
                )));
            }
        }
        Ok(Dataset {
            samples,
            label_names,
            feature_len,
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Sample count per class index.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.label_names.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// New dataset containing the samples at `indices`, keeping the full
    /// label vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            label_names: self.label_names.clone(),
            feature_len: self.feature_len,
        }
    }
}

/// Accumulates rows whose labels arrive as family-name text; the vocabulary
/// is built in first-appearance order.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    samples: Vec<LabeledSample>,
    label_names: Vec<String>,
    index_of: HashMap<String, usize>,
    feature_len: Option<usize>,
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_feature_len(feature_len: usize) -> Self {
        DatasetBuilder {
            feature_len: Some(feature_len),
            ..Self::default()
        }
    }

    pub fn push(
        &mut self,
        features: FeatureVector,
        family: &str,
        source_name: impl Into<String>,
    ) -> Result<()> {
        let expected = *self.feature_len.get_or_insert(features.len());
        if features.len() != expected {
            return Err(Error::shape(
                format!("feature length {expected}"),
                format!("{}", features.len()),
            ));
        }
        let label = match self.index_of.get(family) {
            Some(&i) => i,
            None => {
                let i = self.label_names.len();
                self.label_names.push(family.to_string());
                self.index_of.insert(family.to_string(), i);
                i
            }
        };
        self.samples.push(LabeledSample {
            features,
            label,
            source_name: source_name.into(),
        });
        Ok(())
    }

    pub fn build(self) -> Result<Dataset> {
        let feature_len = self
            .feature_len
            .ok_or_else(|| Error::EmptyInput("no samples pushed".into()))?;
        Dataset::new(self.samples, self.label_names, feature_len)
    }
}

// ---------------------------------------------------------------------------
// CSV interchange
// ---------------------------------------------------------------------------

/// Writes `f0,...,f{n-1},label` rows, labels as family-name text, LF endings.
pub fn write_csv(dataset: &Dataset) -> Result<Vec<u8>> {
    for name in dataset.label_names() {
        if name.contains(',') || name.contains('\n') || name.contains('\r') {
            return Err(Error::InvalidArgument(format!(
                "label {name:?} contains a character the CSV format cannot carry"
            )));
        }
    }
    let mut out = String::new();
    for i in 0..dataset.feature_len() {
        out.push('f');
        out.push_str(&i.to_string());
        out.push(',');
    }
    out.push_str("label\n");
    for s in dataset.samples() {
        for v in s.features.values() {
            out.push_str(&v.to_string());
            out.push(',');
        }
        out.push_str(&dataset.label_names()[s.label]);
        out.push('\n');
    }
    Ok(out.into_bytes())
}

/// Parses the CSV format written by [`write_csv`]. Labels are family-name
/// text; the vocabulary is rebuilt in first-appearance order. Row numbers in
/// errors are 1-based lines (the header is line 1).
pub fn load_csv(data: &[u8]) -> Result<Dataset> {
    let text = std::str::from_utf8(data).map_err(|e| Error::parse(0, format!("not UTF-8: {e}")))?;
    let mut lines = text.split('\n').enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty input"))?;
    let header = header.strip_suffix('\r').unwrap_or(header);
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || *cols.last().expect("non-empty split") != "label" {
        return Err(Error::parse(1, "header must be f0,...,f{n-1},label"));
    }
    let feature_len = cols.len() - 1;
    for (i, col) in cols[..feature_len].iter().enumerate() {
        if *col != format!("f{i}") {
            return Err(Error::parse(
                1,
                format!("unexpected header column {col:?} at position {i}"),
            ));
        }
    }

    let mut builder = DatasetBuilder::with_feature_len(feature_len);
    let mut row_index = 0usize;
    for (line_idx, raw) in lines {
        let line_no = line_idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue; // trailing newline
        }
        row_index += 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != feature_len + 1 {
            return Err(Error::parse(
                line_no,
                format!(
                    "expected {} cells, got {}",
                    feature_len + 1,
                    cells.len()
                ),
            ));
        }
        let mut values = Vec::with_capacity(feature_len);
        for (i, cell) in cells[..feature_len].iter().enumerate() {
            let n: i64 = cell.parse().map_err(|_| {
                Error::parse(line_no, format!("cell f{i} is not an integer: {cell:?}"))
            })?;
            if !(0..=255).contains(&n) {
                return Err(Error::parse(
                    line_no,
                    format!("cell f{i} value {n} outside [0, 255]"),
                ));
            }
            values.push(n as u8);
        }
        let label = cells[feature_len];
        if label.is_empty() {
            return Err(Error::parse(line_no, "empty label"));
        }
        builder.push(FeatureVector::new(values), label, format!("row{row_index}"))?;
    }
    builder.build()
}

// ---------------------------------------------------------------------------
// Stratified split and folds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Dataset,
    pub test: Dataset,
}

/// Per-class round-half-up split with clamping so every class keeps at least
/// one sample on each side. Membership comes from a seeded shuffle within
/// each class; sample order within each side follows the input dataset.
pub fn stratified_split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitResult> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let by_class = indices_by_class(dataset);
    for (c, indices) in by_class.iter().enumerate() {
        if !indices.is_empty() && indices.len() < 2 {
            return Err(Error::Stratification {
                class: dataset.label_names()[c].clone(),
                count: indices.len(),
                needed: 2,
            });
        }
    }

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (c, indices) in by_class.iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        let mut shuffled = indices.clone();
        SplitMix64::stream(seed, c as u64).shuffle(&mut shuffled);
        let n = shuffled.len();
        let want = (train_fraction * n as f64 + 0.5).floor() as usize;
        let take = want.clamp(1, n - 1);
        train_idx.extend_from_slice(&shuffled[..take]);
        test_idx.extend_from_slice(&shuffled[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(SplitResult {
        train: dataset.subset(&train_idx),
        test: dataset.subset(&test_idx),
    })
}

/// Assignment of each sample index to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn indices_in_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn indices_outside_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }
}

/// Per class: seeded shuffle, then round-robin over the folds. The fold
/// cursor starts at a seed-derived offset and carries over from class to
/// class, so per-class fold sizes differ by at most one AND global fold
/// sizes stay balanced (k = n gives singleton folds, true leave-one-out).
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut fold_of = vec![0usize; dataset.len()];
    let offset_stream = u64::from_le_bytes(*b"foldoffs");
    let mut cursor = SplitMix64::stream(seed, offset_stream).next_below(k as u64) as usize;
    for (c, indices) in indices_by_class(dataset).iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        let mut shuffled = indices.clone();
        SplitMix64::stream(seed, c as u64).shuffle(&mut shuffled);
        for &sample in &shuffled {
            fold_of[sample] = cursor % k;
            cursor += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

fn indices_by_class(dataset: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); dataset.n_classes()];
    for (i, s) in dataset.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }
    by_class
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(counts: &[usize]) -> Dataset {
        let mut builder = DatasetBuilder::with_feature_len(2);
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                builder
                    .push(
                        FeatureVector::new(vec![c as u8, i as u8]),
                        &format!("fam{c}"),
                        format!("fam{c}/s{i}"),
                    )
                    .unwrap();
            }
        }
        builder.build().unwrap()
    }

    #[test]
    fn builder_first_appearance_order() {
        let mut b = DatasetBuilder::new();
        b.push(FeatureVector::new(vec![1]), "beta", "x").unwrap();
        b.push(FeatureVector::new(vec![2]), "alpha", "y").unwrap();
        b.push(FeatureVector::new(vec![3]), "beta", "z").unwrap();
        let d = b.build().unwrap();
        assert_eq!(d.label_names(), &["beta".to_string(), "alpha".to_string()]);
        assert_eq!(d.samples()[2].label, 0);
    }

    #[test]
    fn csv_round_trip() {
        let d = toy_dataset(&[3, 2, 4]);
        let bytes = write_csv(&d).unwrap();
        let back = load_csv(&bytes).unwrap();
        assert_eq!(back.feature_len(), d.feature_len());
        assert_eq!(back.label_names(), d.label_names());
        assert_eq!(back.len(), d.len());
        for (a, b) in d.samples().iter().zip(back.samples()) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn csv_single_row_layout() {
        let mut b = DatasetBuilder::with_feature_len(4);
        b.push(FeatureVector::new(vec![1, 2, 3, 4]), "Adialer.C", "s")
            .unwrap();
        let bytes = write_csv(&b.build().unwrap()).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "f0,f1,f2,f3,label\n1,2,3,4,Adialer.C\n"
        );
    }

    #[test]
    fn csv_rejects_short_row() {
        let text = "f0,f1,f2,label\n1,2,alpha\n";
        match load_csv(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_out_of_range_and_non_integer() {
        assert!(load_csv(b"f0,label\n256,a\n").is_err());
        assert!(load_csv(b"f0,label\n-1,a\n").is_err());
        assert!(load_csv(b"f0,label\n1.5,a\n").is_err());
    }

    #[test]
    fn csv_rejects_unknown_header() {
        assert!(matches!(
            load_csv(b"x0,label\n1,a\n").unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
        assert!(load_csv(b"f0,f1\n1,2\n").is_err());
    }

    #[test]
    fn csv_rejects_comma_in_label_on_write() {
        let d = Dataset::new(
            vec![LabeledSample {
                features: FeatureVector::new(vec![1]),
                label: 0,
                source_name: "s".into(),
            }],
            vec!["bad,name".into()],
            1,
        )
        .unwrap();
        assert!(write_csv(&d).is_err());
    }

    #[test]
    fn split_smallest_family_arithmetic() {
        // 80 samples at fraction 0.8 -> 64 train / 16 test.
        let d = toy_dataset(&[80]);
        let split = stratified_split(&d, 0.8, 7).unwrap();
        assert_eq!(split.train.len(), 64);
        assert_eq!(split.test.len(), 16);
    }

    #[test]
    fn split_clamps_tiny_class() {
        let d = toy_dataset(&[2]);
        let split = stratified_split(&d, 0.8, 7).unwrap();
        assert_eq!(split.train.len(), 1);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let d = toy_dataset(&[13, 9, 21]);
        let a = stratified_split(&d, 0.8, 42).unwrap();
        let b = stratified_split(&d, 0.8, 42).unwrap();
        let names =
            |ds: &Dataset| ds.samples().iter().map(|s| s.source_name.clone()).collect::<Vec<_>>();
        assert_eq!(names(&a.train), names(&b.train));
        assert_eq!(names(&a.test), names(&b.test));

        let mut all = names(&a.train);
        all.extend(names(&a.test));
        all.sort();
        let mut orig = names(&d);
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let d = toy_dataset(&[5, 1]);
        assert!(matches!(
            stratified_split(&d, 0.8, 1).unwrap_err(),
            Error::Stratification { .. }
        ));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let d = toy_dataset(&[4]);
        assert!(stratified_split(&d, 0.0, 1).is_err());
        assert!(stratified_split(&d, 1.0, 1).is_err());
    }

    #[test]
    fn folds_pigeonhole_exact() {
        let d = toy_dataset(&[10]);
        let folds = stratified_folds(&d, 10, 3).unwrap();
        for f in 0..10 {
            assert_eq!(folds.indices_in_fold(f).len(), 1);
        }
    }

    #[test]
    fn folds_round_robin_spread() {
        // 23 = 2*10 + 3: three folds get 3, seven folds get 2.
        let d = toy_dataset(&[23]);
        let folds = stratified_folds(&d, 10, 5).unwrap();
        let mut sizes: Vec<usize> = (0..10).map(|f| folds.indices_in_fold(f).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 2, 2, 2, 3, 3, 3]);
    }

    #[test]
    fn folds_cover_every_index_once() {
        let d = toy_dataset(&[7, 12, 5]);
        let folds = stratified_folds(&d, 4, 11).unwrap();
        let mut seen = vec![0usize; d.len()];
        for f in 0..4 {
            for i in folds.indices_in_fold(f) {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn folds_reject_k_below_two() {
        let d = toy_dataset(&[4]);
        assert!(stratified_folds(&d, 1, 0).is_err());
    }

    #[test]
    fn folds_balance_globally_for_leave_one_out() {
        // Two classes of 3, k = 6: the carried cursor spreads them into six
        // singleton folds.
        let d = toy_dataset(&[3, 3]);
        for seed in 0..8 {
            let folds = stratified_folds(&d, 6, seed).unwrap();
            for f in 0..6 {
                assert_eq!(folds.indices_in_fold(f).len(), 1, "seed {seed} fold {f}");
            }
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let class_counts = prop::collection::vec(2usize..20, 1..5);
        (class_counts, 1usize..6).prop_map(|(counts, feature_len)| {
            let mut builder = DatasetBuilder::with_feature_len(feature_len);
            for (c, &n) in counts.iter().enumerate() {
                for i in 0..n {
                    let features: Vec<u8> =
                        (0..feature_len).map(|f| (c * 37 + i * 11 + f) as u8).collect();
                    builder
                        .push(
                            FeatureVector::new(features),
                            &format!("family-{c}"),
                            format!("f{c}/s{i}"),
                        )
                        .unwrap();
                }
            }
            builder.build().unwrap()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_lossless(d in arb_dataset()) {
            let back = load_csv(&write_csv(&d).unwrap()).unwrap();
            prop_assert_eq!(back.label_names(), d.label_names());
            prop_assert_eq!(back.feature_len(), d.feature_len());
            prop_assert_eq!(back.len(), d.len());
            for (a, b) in d.samples().iter().zip(back.samples()) {
                prop_assert_eq!(&a.features, &b.features);
                prop_assert_eq!(a.label, b.label);
            }
        }

        #[test]
        fn split_counts_cover_and_disjoint(
            d in arb_dataset(),
            fraction in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let split = stratified_split(&d, fraction, seed).unwrap();
            prop_assert_eq!(split.train.len() + split.test.len(), d.len());

            let train_counts = split.train.class_counts();
            let input_counts = d.class_counts();
            for (c, &n) in input_counts.iter().enumerate() {
                let want = (fraction * n as f64 + 0.5).floor() as usize;
                let got = train_counts[c];
                prop_assert!(got >= 1 && got < n);
                prop_assert!(
                    (got as i64 - want as i64).abs() <= 1,
                    "class {c}: got {got}, want ~{want} of {n}"
                );
            }

            let mut names: Vec<&str> = split
                .train
                .samples()
                .iter()
                .chain(split.test.samples())
                .map(|s| s.source_name.as_str())
                .collect();
            names.sort_unstable();
            names.dedup();
            prop_assert_eq!(names.len(), d.len(), "overlap or loss between sides");
        }

        #[test]
        fn folds_partition_with_bounded_spread(
            d in arb_dataset(),
            k in 2usize..8,
            seed in any::<u64>(),
        ) {
            let folds = stratified_folds(&d, k, seed).unwrap();
            let mut seen = vec![0usize; d.len()];
            for f in 0..k {
                for i in folds.indices_in_fold(f) {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));

            for c in 0..d.n_classes() {
                let per_fold: Vec<usize> = (0..k)
                    .map(|f| {
                        folds
                            .indices_in_fold(f)
                            .iter()
                            .filter(|&&i| d.samples()[i].label == c)
                            .count()
                    })
                    .collect();
                let spread = per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap();
                prop_assert!(spread <= 1, "class {c} fold sizes {per_fold:?}");
            }
        }
    }
}
