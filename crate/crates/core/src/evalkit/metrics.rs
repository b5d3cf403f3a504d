use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scalar::Real;
use crate::text::metric_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
}

impl<F: Real> MetricScore<F> {
    pub fn zero() -> Self {
        Self {
            precision: F::zero(),
            recall: F::zero(),
            f1: F::zero(),
        }
    }

    pub fn from_pr(precision: F, recall: F) -> Self {
        Self {
            precision,
            recall,
            f1: F::harmonic(precision, recall),
        }
    }

    /// From overlap counts against candidate and reference totals.
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        Self::from_pr(F::ratio(overlap, candidate), F::ratio(overlap, reference))
    }

    /// Component-wise mean of a batch of scores.
    pub fn mean<'a>(scores: impl IntoIterator<Item = &'a Self>) -> Self {
        let (mut p, mut r, mut f, mut n) = (F::zero(), F::zero(), F::zero(), 0usize);
        for s in scores {
            p = p + s.precision;
            r = r + s.recall;
            f = f + s.f1;
            n += 1;
        }
        if n == 0 {
            return Self::zero();
        }
        let n = F::from_count(n);
        Self {
            precision: p / n,
            recall: r / n,
            f1: f / n,
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap. Either side shorter than `n` tokens scores zero.
pub fn rouge_n<F: Real>(
    candidate: &str,
    reference: &str,
    n: usize,
) -> Result<MetricScore<F>, EvalError> {
    if n == 0 {
        return Err(EvalError::InvalidN);
    }
    let cand = metric_tokens(candidate);
    let refr = metric_tokens(reference);
    if cand.len() < n || refr.len() < n {
        return Ok(MetricScore::zero());
    }
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refr, n);
    let overlap: usize = cand_counts
        .iter()
        .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(MetricScore::from_counts(
        overlap,
        cand.len() - n + 1,
        refr.len() - n + 1,
    ))
}

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Longest-common-subsequence overlap over metric tokens.
pub fn rouge_l<F: Real>(candidate: &str, reference: &str) -> MetricScore<F> {
    let cand = metric_tokens(candidate);
    let refr = metric_tokens(reference);
    if cand.is_empty() || refr.is_empty() {
        return MetricScore::zero();
    }
    MetricScore::from_counts(lcs_len(&cand, &refr), cand.len(), refr.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore<F> {
    #[serde(flatten)]
    pub score: MetricScore<F>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport<F> {
    pub per_class: BTreeMap<String, ClassScore<F>>,
    pub macro_avg: MetricScore<F>,
    pub micro_avg: MetricScore<F>,
    pub weighted_avg: MetricScore<F>,
    pub examples: usize,
}

impl<F: Real> ClassificationReport<F> {
    pub fn average(&self, mode: Averaging) -> MetricScore<F> {
        match mode {
            Averaging::Macro => self.macro_avg,
            Averaging::Micro => self.micro_avg,
            Averaging::Weighted => self.weighted_avg,
        }
    }
}

fn normalize(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Per-class precision/recall/F1 plus macro, micro and support-weighted averages.
///
/// Labels match case-insensitively after trimming. A prediction outside the
/// label set counts against recall of its gold class only.
pub fn classification_f1<F: Real, S: AsRef<str>>(
    predictions: &[S],
    golds: &[S],
    labels: &[S],
) -> Result<ClassificationReport<F>, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut canon: BTreeMap<String, String> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for l in labels {
        let key = normalize(l.as_ref());
        if !canon.contains_key(&key) {
            canon.insert(key.clone(), l.as_ref().trim().to_string());
            order.push(key);
        }
    }
    // (tp, fp, fn) per normalized label
    let mut counts: HashMap<&str, (usize, usize, usize)> =
        order.iter().map(|k| (k.as_str(), (0, 0, 0))).collect();
    let golds_n: Vec<String> = golds.iter().map(|g| normalize(g.as_ref())).collect();
    for (g, raw) in golds_n.iter().zip(golds) {
        if !counts.contains_key(g.as_str()) {
            return Err(EvalError::UnknownGoldLabel(raw.as_ref().to_string()));
        }
    }
    for (p, g) in predictions
        .iter()
        .map(|p| normalize(p.as_ref()))
        .zip(&golds_n)
    {
        if &p == g {
            counts.get_mut(g.as_str()).expect("checked").0 += 1;
        } else {
            counts.get_mut(g.as_str()).expect("checked").2 += 1;
            if let Some(c) = counts.get_mut(p.as_str()) {
                c.1 += 1;
            }
        }
    }

    let mut per_class = BTreeMap::new();
    let (mut tp_sum, mut fp_sum, mut fn_sum) = (0, 0, 0);
    let (mut mp, mut mr, mut mf) = (F::zero(), F::zero(), F::zero());
    let (mut wp, mut wr, mut wf) = (F::zero(), F::zero(), F::zero());
    for key in &order {
        let (tp, fp, fn_) = counts[key.as_str()];
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fn_;
        let score = MetricScore::from_counts(tp, tp + fp, tp + fn_);
        let support = tp + fn_;
        mp = mp + score.precision;
        mr = mr + score.recall;
        mf = mf + score.f1;
        let w = F::from_count(support);
        wp = wp + w * score.precision;
        wr = wr + w * score.recall;
        wf = wf + w * score.f1;
        per_class.insert(canon[key].clone(), ClassScore { score, support });
    }
    let k = F::from_count(order.len().max(1));
    let total = F::from_count(golds.len());
    Ok(ClassificationReport {
        per_class,
        macro_avg: MetricScore {
            precision: mp / k,
            recall: mr / k,
            f1: mf / k,
        },
        micro_avg: MetricScore::from_counts(tp_sum, tp_sum + fp_sum, tp_sum + fn_sum),
        weighted_avg: MetricScore {
            precision: wp / total,
            recall: wr / total,
            f1: wf / total,
        },
        examples: golds.len(),
    })
}
