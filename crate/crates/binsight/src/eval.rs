//! Measurement protocol: confusion matrices, overall and per-class accuracy,
//! Cohen's kappa, exact (Clopper-Pearson) binomial confidence bounds, the
//! k-fold cross-validation driver, and report/heatmap rendering.
//!
//! Confusion matrix orientation everywhere: rows are the actual class,
//! columns are the predicted class.

use rayon::prelude::*;

use crate::dataset::{stratified_folds, Dataset};
use crate::error::{Error, Result};
use crate::featurize::GrayImage;
use crate::forest::{train_forest, ForestConfig, ForestModel};
use crate::rng::derive_seed;

/// k x k tally of actual class (rows) against predicted class (columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    label_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn zeros(label_names: Vec<String>) -> Self {
        let k = label_names.len();
        ConfusionMatrix {
            counts: vec![vec![0; k]; k],
            label_names,
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>, label_names: Vec<String>) -> Result<Self> {
        let k = label_names.len();
        if counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(Error::shape(format!("{k}x{k} counts"), "ragged counts"));
        }
        Ok(ConfusionMatrix { counts, label_names })
    }

    pub fn k(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn count(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    pub fn col_total(&self, col: usize) -> u64 {
        self.counts.iter().map(|row| row[col]).sum()
    }

    /// Adds another matrix over the same label set into this one.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.label_names != self.label_names {
            return Err(Error::InvalidArgument(
                "cannot merge confusion matrices over different label sets".into(),
            ));
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (m, t) in mine.iter_mut().zip(theirs) {
                *m += t;
            }
        }
        Ok(())
    }

    /// CSV rendering with family names on both axes. The corner cell names
    /// the orientation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for name in &self.label_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (r, row) in self.counts.iter().enumerate() {
            out.push_str(&self.label_names[r]);
            for &c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Tallies prediction/truth pairs into a matrix over `label_names`.
pub fn confusion(
    predictions: &[usize],
    truths: &[usize],
    label_names: &[String],
) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let k = label_names.len();
    let mut cm = ConfusionMatrix::zeros(label_names.to_vec());
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= k || t >= k {
            return Err(Error::InvalidArgument(format!(
                "class index out of range: predicted {p}, actual {t}, k = {k}"
            )));
        }
        cm.record(t, p);
    }
    Ok(cm)
}

/// Overall accuracy: trace / total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Per-class recall `counts[c][c] / row_total_c`; `None` marks classes with
/// no actual samples (0/0), which is distinct from a recall of 0.
pub fn per_class_recall(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.k())
        .map(|c| {
            let row = cm.row_total(c);
            (row > 0).then(|| cm.count(c, c) as f64 / row as f64)
        })
        .collect()
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`. The degeneracy check (`p_e = 1`,
/// all mass in one row/column pair) runs on exact integer arithmetic.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let n = total as u128;
    let expected_num: u128 = (0..cm.k())
        .map(|c| cm.row_total(c) as u128 * cm.col_total(c) as u128)
        .sum();
    if expected_num == n * n {
        return Err(Error::Undefined(
            "kappa is undefined when chance agreement is total".into(),
        ));
    }
    let p_o = cm.trace() as f64 / total as f64;
    let p_e = expected_num as f64 / (total as f64 * total as f64);
    Ok((p_o - p_e) / (1.0 - p_e))
}

// ---------------------------------------------------------------------------
// Exact binomial (Clopper-Pearson) interval
// ---------------------------------------------------------------------------

/// Exact binomial confidence interval for `correct` successes out of `total`,
/// via beta-quantile inversion (bisection on the regularized incomplete beta
/// function to 1e-12). Boundary conventions: `correct = 0` pins the lower
/// bound to exactly 0, `correct = total` pins the upper bound to exactly 1.
pub fn accuracy_ci(correct: u64, total: u64, level: f64) -> Result<(f64, f64)> {
    if total == 0 || correct > total {
        return Err(Error::InvalidArgument(format!(
            "invalid counts: {correct} of {total}"
        )));
    }
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let alpha = 1.0 - level;
    let (x, n) = (correct as f64, total as f64);

    let lower = if correct == 0 {
        0.0
    } else {
        // P(X >= x | p) = I_p(x, n - x + 1), increasing in p.
        bisect(|p| inc_beta(x, n - x + 1.0, p) - alpha / 2.0)
    };
    let upper = if correct == total {
        1.0
    } else {
        // P(X <= x | p) = 1 - I_p(x + 1, n - x), decreasing in p.
        bisect(|p| (1.0 - inc_beta(x + 1.0, n - x, p)) - alpha / 2.0).max(lower)
    };
    Ok((lower, upper))
}

/// Finds the p in [0, 1] where the monotone function `f` crosses zero,
/// resolving the bracket to a width below 1e-12.
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let rising = f(1.0) >= f(0.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        let go_right = if rising { v < 0.0 } else { v > 0.0 };
        if go_right {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Regularized incomplete beta function I_x(a, b), continued-fraction form.
fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz's method).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms), published coefficients verbatim.
#[allow(clippy::excessive_precision)]
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // Reflection formula.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * z).sin().ln()
            - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Accuracy, kappa, 95% exact binomial bounds, per-class recall, and the
/// underlying confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: u64,
    pub accuracy: f64,
    pub kappa: f64,
    pub accuracy_lower: f64,
    pub accuracy_upper: f64,
    pub per_class_recall: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    /// Computes every metric from a confusion matrix.
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<EvalReport> {
        let n = cm.total();
        let acc = accuracy(&cm)?;
        let kap = kappa(&cm)?;
        let (lower, upper) = accuracy_ci(cm.trace(), n, 0.95)?;
        Ok(EvalReport {
            n,
            accuracy: acc,
            kappa: kap,
            accuracy_lower: lower,
            accuracy_upper: upper,
            per_class_recall: per_class_recall(&cm),
            confusion: cm,
        })
    }

    /// Flat key-value rendering; one `recall.<family>` line per class.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n = {}\n", self.n));
        out.push_str(&format!("accuracy = {:.6}\n", self.accuracy));
        out.push_str(&format!("kappa = {:.6}\n", self.kappa));
        out.push_str(&format!("accuracy_lower = {:.6}\n", self.accuracy_lower));
        out.push_str(&format!("accuracy_upper = {:.6}\n", self.accuracy_upper));
        for (name, recall) in self.confusion.label_names().iter().zip(&self.per_class_recall) {
            match recall {
                Some(r) => out.push_str(&format!("recall.{name} = {r:.6}\n")),
                None => out.push_str(&format!("recall.{name} = undefined\n")),
            }
        }
        out
    }
}

/// Predicts every test sample and assembles the full report. Test labels are
/// aligned to the model's vocabulary by family name, so the two datasets may
/// order their label lists differently.
pub fn evaluate(model: &ForestModel, test: &Dataset) -> Result<EvalReport> {
    let (predictions, truths) = predict_dataset(model, test)?;
    let cm = confusion(&predictions, &truths, model.label_names())?;
    EvalReport::from_confusion(cm)
}

fn predict_dataset(model: &ForestModel, test: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("test dataset is empty".into()));
    }
    if test.feature_len() != model.feature_len() {
        return Err(Error::shape(
            format!("feature length {}", model.feature_len()),
            format!("{}", test.feature_len()),
        ));
    }
    let truth_index: Vec<usize> = test
        .label_names()
        .iter()
        .map(|name| {
            model
                .label_names()
                .iter()
                .position(|m| m == name)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("test class {name:?} unknown to the model"))
                })
        })
        .collect::<Result<_>>()?;

    let predictions: Vec<usize> = test
        .samples()
        .par_iter()
        .map(|s| model.predict(s.features.values()))
        .collect::<Result<_>>()?;
    let truths: Vec<usize> = test.samples().iter().map(|s| truth_index[s.label]).collect();
    Ok((predictions, truths))
}

/// Per-fold accuracies, their mean, and the report over all pooled
/// out-of-fold predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct CVResult {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub pooled_confusion: ConfusionMatrix,
    pub pooled_report: EvalReport,
}

impl CVResult {
    /// Key-value rendering: fold and mean lines first, then the pooled
    /// report (whose `accuracy`/`kappa`/bounds describe pooled predictions).
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("folds = {}\n", self.fold_accuracies.len()));
        for (i, acc) in self.fold_accuracies.iter().enumerate() {
            out.push_str(&format!("fold_accuracy.{i} = {acc:.6}\n"));
        }
        out.push_str(&format!("mean_fold_accuracy = {:.6}\n", self.mean_accuracy));
        out.push_str(&self.pooled_report.render());
        out
    }
}

/// Stratified k-fold cross-validation: each fold is held out once while a
/// forest trains on the rest (fresh derived seed per fold). Every sample is
/// predicted exactly once, so the pooled matrix total equals `train.len()`.
pub fn cross_validate(
    train: &Dataset,
    k: usize,
    forest_config: &ForestConfig,
    seed: u64,
) -> Result<CVResult> {
    let folds = stratified_folds(train, k, seed)?;
    let fold_seed_base = derive_seed(seed, u64::from_le_bytes(*b"cv-folds"));

    let mut fold_accuracies = Vec::with_capacity(k);
    let mut pooled = ConfusionMatrix::zeros(train.label_names().to_vec());
    for fold in 0..k {
        let holdout = folds.indices_in_fold(fold);
        if holdout.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "fold {fold} is empty; k = {k} is too large for {} samples",
                train.len()
            )));
        }
        let fit_set = train.subset(&folds.indices_outside_fold(fold));
        let holdout_set = train.subset(&holdout);
        let config = ForestConfig {
            seed: derive_seed(fold_seed_base, fold as u64),
            ..forest_config.clone()
        };
        let model = train_forest(&fit_set, &config)?;
        let (predictions, truths) = predict_dataset(&model, &holdout_set)?;
        let cm = confusion(&predictions, &truths, train.label_names())?;
        fold_accuracies.push(accuracy(&cm)?);
        pooled.merge(&cm)?;
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;
    let pooled_report = EvalReport::from_confusion(pooled.clone())?;
    Ok(CVResult {
        fold_accuracies,
        mean_accuracy,
        pooled_confusion: pooled,
        pooled_report,
    })
}

/// Row-normalized heatmap of the matrix: pixel (r, c) is
/// `round(255 * counts[r][c] / row_total_r)`, 0 for empty rows. `scale`
/// up-samples each cell to a `scale x scale` block for viewability.
pub fn export_heatmap(cm: &ConfusionMatrix, scale: usize) -> Result<GrayImage> {
    if scale == 0 {
        return Err(Error::InvalidArgument("heatmap scale must be positive".into()));
    }
    let k = cm.k();
    let side = k * scale;
    let mut pixels = vec![0u8; side * side];
    for r in 0..k {
        let row_total = cm.row_total(r);
        for c in 0..k {
            let value = if row_total == 0 {
                0
            } else {
                (255.0 * cm.count(r, c) as f64 / row_total as f64 + 0.5).floor() as u8
            };
            for dr in 0..scale {
                for dc in 0..scale {
                    pixels[(r * scale + dr) * side + c * scale + dc] = value;
                }
            }
        }
    }
    GrayImage::new(side, side, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetBuilder;
    use crate::featurize::FeatureVector;

    fn cm(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        let names = (0..counts.len()).map(|i| format!("c{i}")).collect();
        ConfusionMatrix::from_counts(counts, names).unwrap()
    }

    #[test]
    fn confusion_direct_tally() {
        let names = vec!["a".to_string(), "b".to_string()];
        let m = confusion(&[0, 1, 1], &[0, 0, 1], &names).unwrap();
        assert_eq!(m.counts(), &[vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn confusion_rejects_mismatch_and_range() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(confusion(&[0], &[0, 1], &names).is_err());
        assert!(confusion(&[2], &[0], &names).is_err());
    }

    #[test]
    fn accuracy_values() {
        assert_eq!(accuracy(&cm(vec![vec![3, 0], vec![0, 2]])).unwrap(), 1.0);
        assert!((accuracy(&cm(vec![vec![40, 10], vec![20, 30]])).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(accuracy(&cm(vec![vec![0, 5], vec![5, 0]])).unwrap(), 0.0);
        assert!(accuracy(&cm(vec![vec![0, 0], vec![0, 0]])).is_err());
    }

    #[test]
    fn recall_values() {
        let r = per_class_recall(&cm(vec![vec![40, 10], vec![20, 30]]));
        assert!((r[0].unwrap() - 0.8).abs() < 1e-12);
        assert!((r[1].unwrap() - 0.6).abs() < 1e-12);

        let r = per_class_recall(&cm(vec![vec![5, 0], vec![0, 0]]));
        assert_eq!(r[1], None);
    }

    #[test]
    fn kappa_values() {
        assert!((kappa(&cm(vec![vec![7, 0], vec![0, 3]])).unwrap() - 1.0).abs() < 1e-12);
        // p_o = 0.7, p_e = (50*60 + 50*40) / 100^2 = 0.5 -> kappa 0.4
        assert!((kappa(&cm(vec![vec![40, 10], vec![20, 30]])).unwrap() - 0.4).abs() < 1e-12);
        // Independence: p_o = p_e -> 0
        assert!(kappa(&cm(vec![vec![25, 25], vec![25, 25]])).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kappa_degenerate_is_undefined() {
        assert!(matches!(
            kappa(&cm(vec![vec![9, 0], vec![0, 0]])),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn ci_boundary_rules_exact() {
        let (lo, _) = accuracy_ci(0, 10, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        let (_, hi) = accuracy_ci(10, 10, 0.95).unwrap();
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn ci_contains_point_estimate() {
        for &(c, n) in &[(1u64, 2u64), (5, 10), (95, 100), (250, 500), (0, 7), (7, 7)] {
            let (lo, hi) = accuracy_ci(c, n, 0.95).unwrap();
            let p = c as f64 / n as f64;
            assert!(lo <= p + 1e-12 && p <= hi + 1e-12, "({c},{n}): [{lo},{hi}]");
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn ci_symmetry_and_monotonicity() {
        let n = 40;
        let mut prev = (-1.0, -1.0);
        for c in 0..=n {
            let (lo, hi) = accuracy_ci(c, n, 0.95).unwrap();
            let (mlo, mhi) = accuracy_ci(n - c, n, 0.95).unwrap();
            assert!((lo - (1.0 - mhi)).abs() < 1e-9, "symmetry at c={c}");
            assert!((hi - (1.0 - mlo)).abs() < 1e-9, "symmetry at c={c}");
            assert!(lo >= prev.0 - 1e-12 && hi >= prev.1 - 1e-12, "monotone at c={c}");
            prev = (lo, hi);
        }
    }

    // Frozen from an independent beta-quantile computation.
    #[test]
    fn ci_spot_values() {
        let (lo, hi) = accuracy_ci(95, 100, 0.95).unwrap();
        assert!((lo - 0.887_165_088_9).abs() < 1e-9);
        assert!((hi - 0.983_568_120_8).abs() < 1e-9);
        let (lo, hi) = accuracy_ci(250, 500, 0.95).unwrap();
        assert!((lo - 0.455_285_569_3).abs() < 1e-9);
        assert!((hi - 0.544_714_430_7).abs() < 1e-9);
    }

    #[test]
    fn ci_rejects_bad_counts() {
        assert!(accuracy_ci(5, 4, 0.95).is_err());
        assert!(accuracy_ci(0, 0, 0.95).is_err());
    }

    fn separable_dataset() -> Dataset {
        let mut b = DatasetBuilder::with_feature_len(2);
        for i in 0..12u8 {
            b.push(FeatureVector::new(vec![10 + i, 0]), "low", format!("l{i}")).unwrap();
            b.push(FeatureVector::new(vec![200 + i, 0]), "high", format!("h{i}")).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn evaluate_memorized_dataset_is_perfect() {
        let d = separable_dataset();
        let model = train_forest(
            &d,
            &ForestConfig { n_trees: 25, seed: 4, ..Default::default() },
        )
        .unwrap();
        let report = evaluate(&model, &d).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.kappa, 1.0);
        assert!(report.accuracy_lower <= report.accuracy);
        assert!(report.accuracy <= report.accuracy_upper);
        assert_eq!(report.accuracy_upper, 1.0);
    }

    #[test]
    fn evaluate_aligns_labels_by_name() {
        let d = separable_dataset();
        let model = train_forest(
            &d,
            &ForestConfig { n_trees: 25, seed: 4, ..Default::default() },
        )
        .unwrap();
        // Same data, vocabulary discovered in the opposite order.
        let mut b = DatasetBuilder::with_feature_len(2);
        for s in d.samples().iter().rev() {
            b.push(
                s.features.clone(),
                &d.label_names()[s.label],
                s.source_name.clone(),
            )
            .unwrap();
        }
        let reordered = b.build().unwrap();
        assert_ne!(reordered.label_names(), d.label_names());
        let report = evaluate(&model, &reordered).unwrap();
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn leave_one_out_pools_every_sample_once() {
        let mut b = DatasetBuilder::with_feature_len(1);
        for (i, (v, l)) in [(0u8, "a"), (1, "a"), (2, "a"), (200, "b"), (201, "b"), (202, "b")]
            .iter()
            .enumerate()
        {
            b.push(FeatureVector::new(vec![*v]), l, format!("s{i}")).unwrap();
        }
        let d = b.build().unwrap();
        let config = ForestConfig { n_trees: 7, ..Default::default() };
        let cv = cross_validate(&d, 6, &config, 3).unwrap();
        assert_eq!(cv.pooled_confusion.total(), 6);
        let mean = cv.fold_accuracies.iter().sum::<f64>() / 6.0;
        assert_eq!(cv.mean_accuracy, mean);

        let again = cross_validate(&d, 6, &config, 3).unwrap();
        assert_eq!(cv, again);
    }

    #[test]
    fn heatmap_values() {
        let img = export_heatmap(&cm(vec![vec![40, 10], vec![20, 30]]), 1).unwrap();
        assert_eq!(img.pixels(), &[204, 51, 102, 153]);

        let perfect = export_heatmap(&cm(vec![vec![5, 0], vec![0, 9]]), 1).unwrap();
        assert_eq!(perfect.pixels(), &[255, 0, 0, 255]);

        let empty_row = export_heatmap(&cm(vec![vec![5, 0], vec![0, 0]]), 1).unwrap();
        assert_eq!(empty_row.pixels(), &[255, 0, 0, 0]);
    }

    #[test]
    fn heatmap_upscale() {
        let img = export_heatmap(&cm(vec![vec![1, 0], vec![0, 1]]), 3).unwrap();
        assert_eq!((img.width(), img.height()), (6, 6));
        assert_eq!(img.pixel(0, 0), 255);
        assert_eq!(img.pixel(2, 2), 255);
        assert_eq!(img.pixel(2, 3), 0);
        assert_eq!(img.pixel(5, 5), 255);
    }

    #[test]
    fn report_render_has_table_fields() {
        let report = EvalReport::from_confusion(cm(vec![vec![40, 10], vec![20, 30]])).unwrap();
        let text = report.render();
        for key in ["accuracy = ", "kappa = ", "accuracy_lower = ", "accuracy_upper = "] {
            assert!(text.contains(key), "missing {key:?} in:\n{text}");
        }
        assert!(text.contains("recall.c0 = 0.800000"));
    }
}
