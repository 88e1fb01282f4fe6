//! Attention analysis: context-level group weights, their distributions over
//! neutral and sentiment contexts, and per-term heatmaps.

use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AttitudeModel, CvOutcome};
use crate::pipeline::{ContextSample, PreparedCorpus};
use crate::sentiment::Sentiment;
use crate::termizer::{AnalysisGroup, Term};

/// Label class of a context: neutral or sentiment-bearing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelClass {
    N,
    S,
}

impl LabelClass {
    pub fn of(label: Sentiment) -> Self {
        if label.is_sentiment() {
            LabelClass::S
        } else {
            LabelClass::N
        }
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelClass::N => "N",
            LabelClass::S => "S",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupWeightSample {
    /// Index of the context in the analysed sample list.
    pub context: usize,
    pub group: AnalysisGroup,
    pub weight: f64,
    pub class: LabelClass,
}

/// Groups reported in distributions.
pub const REPORTED_GROUPS: [AnalysisGroup; 3] = [AnalysisGroup::Prep, AnalysisGroup::Frames, AnalysisGroup::Sentiment];

/// Attention weights over the real terms of `sample`; the context side for
/// interactive attention.
pub fn extract_alpha(model: &AttitudeModel, sample: &ContextSample) -> Result<Vec<f64>> {
    let kind = model.encoder.kind();
    if !kind.is_attentive() {
        return Err(Error::NotAttentive(kind.to_string()));
    }
    let (_, out) = model.predict_full(&sample.seq)?;
    let mut alpha = out.alpha.ok_or_else(|| Error::NotAttentive(kind.to_string()))?;
    alpha.truncate(sample.seq.len());
    Ok(alpha)
}

/// Σ α_i over positions of `group`.
pub fn context_group_weight(alpha: &[f64], groups: &[AnalysisGroup], group: AnalysisGroup) -> f64 {
    alpha
        .iter()
        .zip(groups)
        .filter(|(_, g)| **g == group)
        .fold(0.0, |acc, (a, _)| acc + a)
}

/// Group weights of every context for all four groups, in context order.
pub fn collect_group_weights(model: &AttitudeModel, samples: &[ContextSample]) -> Result<Vec<GroupWeightSample>> {
    let alphas: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| extract_alpha(model, s))
        .collect::<Result<_>>()?;
    Ok(group_weights(samples, &alphas))
}

/// Group weights of every fold's held-out contexts under that fold's model,
/// pooled over folds.
pub fn held_out_weights(cv: &CvOutcome, corpus: &PreparedCorpus) -> Result<Vec<GroupWeightSample>> {
    let mut out = Vec::new();
    for f in &cv.folds {
        let test = corpus.subset(&f.test_docs);
        let offset = out.len() / AnalysisGroup::ALL.len();
        out.extend(collect_group_weights(&f.model, &test.samples)?.into_iter().map(|mut w| {
            w.context += offset;
            w
        }));
    }
    Ok(out)
}

pub fn group_weights(samples: &[ContextSample], alphas: &[Vec<f64>]) -> Vec<GroupWeightSample> {
    let mut out = Vec::with_capacity(samples.len() * AnalysisGroup::ALL.len());
    for (i, (s, a)) in samples.iter().zip(alphas).enumerate() {
        for group in AnalysisGroup::ALL {
            out.push(GroupWeightSample {
                context: i,
                group,
                weight: context_group_weight(a, &s.groups, group),
                class: LabelClass::of(s.label),
            });
        }
    }
    out
}

/// 1.06 · σ̂ · N^(−1/5), floored at 1e-3.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 1e-3;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (1.06 * var.sqrt() * (n as f64).powf(-0.2)).max(1e-3)
}

/// Gaussian kernel density on `grid`.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Data("kernel density of an empty sample".into()));
    }
    let bw = bandwidth.unwrap_or_else(|| silverman_bandwidth(samples));
    if !(bw.is_finite() && bw > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {bw}")));
    }
    let norm = 1.0 / (samples.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|g| {
            norm * samples
                .iter()
                .map(|x| {
                    let u = (g - x) / bw;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect())
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// [0, 0.2] with 201 points.
pub fn default_grid() -> Vec<f64> {
    grid(0.0, 0.2, 201)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionSummary {
    pub group: AnalysisGroup,
    pub count_n: usize,
    pub count_s: usize,
    /// `None` when the class has no contexts.
    pub mean_n: Option<f64>,
    pub mean_s: Option<f64>,
    pub grid: Vec<f64>,
    pub kde_n: Option<Vec<f64>>,
    pub kde_s: Option<Vec<f64>>,
}

impl DistributionSummary {
    pub fn mean(&self, class: LabelClass) -> Option<f64> {
        match class {
            LabelClass::N => self.mean_n,
            LabelClass::S => self.mean_s,
        }
    }

    /// mean_S − mean_N when both are defined.
    pub fn discrepancy(&self) -> Option<f64> {
        Some(self.mean_s? - self.mean_n?)
    }
}

/// Per reported group: N/S means (over all data) and KDE curves on `grid`.
pub fn summarize_weights(weights: &[GroupWeightSample], grid: &[f64]) -> Result<Vec<DistributionSummary>> {
    REPORTED_GROUPS
        .iter()
        .map(|&group| {
            let side = |class: LabelClass| -> Vec<f64> {
                weights
                    .iter()
                    .filter(|w| w.group == group && w.class == class)
                    .map(|w| w.weight)
                    .collect()
            };
            let (n, s) = (side(LabelClass::N), side(LabelClass::S));
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            let curve = |v: &[f64]| -> Result<Option<Vec<f64>>> {
                if v.is_empty() {
                    Ok(None)
                } else {
                    kde(v, grid, None).map(Some)
                }
            };
            Ok(DistributionSummary {
                group,
                count_n: n.len(),
                count_s: s.len(),
                mean_n: mean(&n),
                mean_s: mean(&s),
                grid: grid.to_vec(),
                kde_n: curve(&n)?,
                kde_s: curve(&s)?,
            })
        })
        .collect()
}

pub fn summarize_distributions(
    model: &AttitudeModel,
    samples: &[ContextSample],
    grid: &[f64],
) -> Result<Vec<DistributionSummary>> {
    summarize_weights(&collect_group_weights(model, samples)?, grid)
}

/// `group,label_class,grid_point,density`; classes without contexts are omitted.
pub fn distributions_csv(summaries: &[DistributionSummary]) -> String {
    let mut out = String::from("group,label_class,grid_point,density\n");
    for s in summaries {
        for (class, curve) in [(LabelClass::N, &s.kde_n), (LabelClass::S, &s.kde_s)] {
            if let Some(curve) = curve {
                for (g, d) in s.grid.iter().zip(curve) {
                    writeln!(out, "{},{class},{g},{d}", s.group.name()).expect("writing to a String");
                }
            }
        }
    }
    out
}

/// `group,mean_N,mean_S`; an empty class prints `NA`.
pub fn means_csv(summaries: &[DistributionSummary]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
    let mut out = String::from("group,mean_N,mean_S\n");
    for s in summaries {
        writeln!(out, "{},{},{}", s.group.name(), fmt(s.mean_n), fmt(s.mean_s)).expect("writing to a String");
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapRow {
    pub position: usize,
    pub term: String,
    pub group: AnalysisGroup,
    pub normalized_weight: f64,
}

/// Per-term α divided by the context maximum.
pub fn export_heatmap(sample: &ContextSample, alpha: &[f64]) -> Result<Vec<HeatmapRow>> {
    let n = sample.seq.len();
    if alpha.len() < n {
        return Err(Error::shape(
            "heatmap",
            format!("{} weights for {n} terms", alpha.len()),
        ));
    }
    let max = alpha[..n].iter().copied().fold(0.0, f64::max);
    Ok((0..n)
        .map(|i| {
            let t = &sample.seq.terms[i];
            let term = if t.is_entity() || matches!(t, Term::Token { .. }) {
                t.label()
            } else {
                sample.seq.surfaces[i].clone()
            };
            HeatmapRow {
                position: i,
                term,
                group: sample.groups[i],
                normalized_weight: if max > 0.0 { alpha[i] / max } else { 0.0 },
            }
        })
        .collect())
}

/// `position<TAB>term<TAB>group<TAB>normalized_weight`.
pub fn heatmap_tsv(rows: &[HeatmapRow]) -> String {
    let mut out = String::from("position\tterm\tgroup\tnormalized_weight\n");
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t{}", r.position, r.term, r.group.name(), r.normalized_weight)
            .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingConfig, Vocabulary};
    use crate::encoders::{EncoderConfig, EncoderKind};
    use crate::model::ModelConfig;
    use crate::termizer::TermSequence;

    fn sample(terms: Vec<Term>, groups: Vec<AnalysisGroup>, label: Sentiment) -> ContextSample {
        let subj_pos = terms.iter().position(|t| *t == Term::EntitySubj).unwrap();
        let obj_pos = terms.iter().position(|t| *t == Term::EntityObj).unwrap();
        ContextSample {
            doc_id: "d".into(),
            sentence_idx: 0,
            source: "a".into(),
            target: "b".into(),
            label,
            seq: TermSequence {
                surfaces: terms.iter().map(|t| t.label()).collect(),
                terms,
                subj_pos,
                obj_pos,
            },
            groups,
        }
    }

    fn model(kind: EncoderKind) -> AttitudeModel {
        let cfg = ModelConfig {
            embedding: EmbeddingConfig {
                word_dim: 4,
                ..EmbeddingConfig::default()
            },
            encoder: EncoderConfig {
                kind,
                n: 6,
                hidden: 3,
                filters: 2,
                ..EncoderConfig::default()
            },
            pretrained: None,
        };
        AttitudeModel::new(&cfg, Vocabulary::new(["в".to_string()]), 3).unwrap()
    }

    #[test]
    fn group_weight_examples() {
        use AnalysisGroup::*;
        let alpha = [0.5, 0.3, 0.2];
        assert!((context_group_weight(&alpha, &[Frames, Other, Frames], Frames) - 0.7).abs() < 1e-15);
        assert_eq!(context_group_weight(&alpha, &[Other, Other, Other], Prep), 0.0);
        assert!((context_group_weight(&alpha, &[Prep, Prep, Prep], Prep) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn alpha_extraction() {
        use AnalysisGroup::*;
        let s = sample(
            vec![Term::EntitySubj, Term::word("в"), Term::EntityObj],
            vec![Other, Prep, Other],
            crate::Sentiment::Neutral,
        );
        for kind in EncoderKind::ALL {
            let m = model(kind);
            match extract_alpha(&m, &s) {
                Ok(a) => {
                    assert!(kind.is_attentive());
                    assert_eq!(a.len(), 3);
                    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    let total: f64 = AnalysisGroup::ALL.iter().map(|&g| context_group_weight(&a, &s.groups, g)).sum();
                    assert!((total - 1.0).abs() < 1e-9);
                }
                Err(Error::NotAttentive(_)) => assert!(!kind.is_attentive()),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn kde_examples() {
        let g = default_grid();
        assert_eq!((g[0], g[200], g.len()), (0.0, 0.2, 201));
        let curve = kde(&[0.1], &g, None).unwrap();
        let argmax = (0..g.len()).max_by(|&a, &b| curve[a].total_cmp(&curve[b])).unwrap();
        assert_eq!(argmax, 100);

        let sym = grid(-1.0, 1.0, 41);
        let c = kde(&[-0.3, 0.3], &sym, Some(0.2)).unwrap();
        for i in 0..41 {
            assert!((c[i] - c[40 - i]).abs() < 1e-12);
        }
        assert!(kde(&[], &g, None).is_err());
        assert_eq!(silverman_bandwidth(&[0.5, 0.5, 0.5]), 1e-3);
    }

    #[test]
    fn kde_integrates_to_one() {
        let samples: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let bw = silverman_bandwidth(&samples);
        let g = grid(-3.0 * bw, 1.0 + 3.0 * bw, 4001);
        let c = kde(&samples, &g, None).unwrap();
        let h = g[1] - g[0];
        let integral: f64 = c.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
        assert!((integral - 1.0).abs() < 0.02, "{integral}");
        assert!(c.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn summaries_flag_empty_classes() {
        use AnalysisGroup::*;
        let samples = vec![
            sample(vec![Term::EntitySubj, Term::EntityObj], vec![Other, Other], crate::Sentiment::Neutral),
            sample(
                vec![Term::EntitySubj, Term::word("в"), Term::EntityObj],
                vec![Other, Prep, Other],
                crate::Sentiment::Neutral,
            ),
        ];
        let alphas = vec![vec![0.5, 0.5], vec![0.2, 0.6, 0.2]];
        let weights = group_weights(&samples, &alphas);
        let out = summarize_weights(&weights, &default_grid()).unwrap();
        assert_eq!(out.len(), 3);
        let prep = &out[0];
        assert_eq!(prep.mean_s, None);
        assert!(prep.kde_s.is_none());
        assert!((prep.mean_n.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(prep.discrepancy(), None);
        let csv = means_csv(&out);
        assert!(csv.contains("PREP,0.3,NA"));
        let dist = distributions_csv(&out);
        assert_eq!(dist.lines().count(), 1 + 3 * 201);
    }

    #[test]
    fn heatmap_examples() {
        use AnalysisGroup::*;
        let s = sample(vec![Term::EntitySubj, Term::EntityObj], vec![Other, Other], crate::Sentiment::Positive);
        let rows = export_heatmap(&s, &[0.1, 0.4]).unwrap();
        assert_eq!(rows.iter().map(|r| r.normalized_weight).collect::<Vec<_>>(), vec![0.25, 1.0]);
        assert_eq!(rows[0].term, "E_subj");
        let rows = export_heatmap(&s, &[0.5, 0.5]).unwrap();
        assert!(rows.iter().all(|r| r.normalized_weight == 1.0));
        let tsv = heatmap_tsv(&rows);
        assert!(tsv.starts_with("position\tterm\tgroup\tnormalized_weight\n0\tE_subj\tOTHER\t1\n"));
    }
}
